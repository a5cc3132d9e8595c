#include "qfp/numeric.hpp"

#include <cmath>
#include <random>

#include "doctest.h"

using namespace qfp;

TEST_CASE("parse_quantity handles engineering suffixes") {
  CHECK(parse_quantity("10") == 10.0);
  CHECK(parse_quantity("1.5") == 1.5);
  CHECK(parse_quantity("-3.25") == -3.25);
  CHECK(parse_quantity("2f") == 2e-15);
  CHECK(parse_quantity("1.6p") == 1.6e-12);
  CHECK(parse_quantity("8n") == 8e-9);
  CHECK(parse_quantity("50u") == 50e-6);
  CHECK(parse_quantity("2.8m") == 2.8e-3);
  CHECK(parse_quantity("100k") == 100e3);
  CHECK(parse_quantity("3meg") == 3e6);
  CHECK(parse_quantity("2g") == 2e9);
  CHECK(parse_quantity("1e-12") == 1e-12);
  CHECK(parse_quantity("1E3") == 1e3);
}

TEST_CASE("parse_quantity is case-insensitive") {
  CHECK(parse_quantity("5P") == 5e-12);
  CHECK(parse_quantity("5N") == 5e-9);
  CHECK(parse_quantity("3MEG") == 3e6);
  CHECK(parse_quantity("3Meg") == 3e6);
  CHECK(parse_quantity("7K") == 7e3);
}

TEST_CASE("parse_quantity rejects malformed tokens") {
  CHECK(!parse_quantity(""));
  CHECK(!parse_quantity("abc"));
  CHECK(!parse_quantity("1.2.3"));
  CHECK(!parse_quantity("10x"));
  CHECK(!parse_quantity("10pp"));
  CHECK(!parse_quantity("p10"));
  CHECK(!parse_quantity("10 p"));
  CHECK(!parse_quantity("nan"));
  CHECK(!parse_quantity("inf"));
}

TEST_CASE("format_double round-trips") {
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> mant(-1.0, 1.0);
  std::uniform_int_distribution<int> expo(-18, 12);
  for (int i = 0; i < 2000; ++i) {
    double v = mant(rng) * std::pow(10.0, expo(rng));
    std::string s = format_double(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(format_double(0.0) == "0");
}

TEST_CASE("format_quantity round-trips through parse_quantity") {
  std::mt19937_64 rng(999);
  std::uniform_real_distribution<double> mant(-1.0, 1.0);
  std::uniform_int_distribution<int> expo(-16, 10);
  for (int i = 0; i < 2000; ++i) {
    double v = mant(rng) * std::pow(10.0, expo(rng));
    std::string s = format_quantity(v);
    auto back = parse_quantity(s);
    REQUIRE(back.has_value());
    CHECK(*back == v);
  }
}

TEST_CASE("format_quantity uses readable suffixes for clean values") {
  CHECK(format_quantity(1.6e-12) == "1.6p");
  CHECK(format_quantity(50e-6) == "50u");
  CHECK(format_quantity(100.0) == "100");
  CHECK(format_quantity(0.0) == "0");
}

TEST_CASE("parse_unit_quantity requires a unit") {
  CHECK(!parse_unit_quantity("10", "s"));
  CHECK(!parse_unit_quantity("10p", "s"));
  CHECK(parse_unit_quantity("10ps", "s") == 1e-11);
  CHECK(parse_unit_quantity("0.1ns", "s") == 0.1e-9);
  CHECK(parse_unit_quantity("5GHz", "Hz") == 5e9);
  CHECK(parse_unit_quantity("4.4GHz", "Hz") == 4.4e9);
  CHECK(parse_unit_quantity("2.8zJ", "J") == 2.8e-21);
  CHECK(parse_unit_quantity("17aJ", "J") == 17e-18);
  CHECK(parse_unit_quantity("20uA", "A") == 20e-6);
  CHECK(parse_unit_quantity("50ohm", "ohm") == 50.0);
  CHECK(parse_unit_quantity("-16dBm", "dBm") == -16.0);
  CHECK(parse_unit_quantity("-19.5dBm", "dBm") == -19.5);
}

TEST_CASE("parse_unit_quantity rejects mismatched units") {
  CHECK(!parse_unit_quantity("10ps", "Hz"));
  CHECK(!parse_unit_quantity("10psx", "s"));
  CHECK(!parse_unit_quantity("ps", "s"));
  CHECK(!parse_unit_quantity("", "s"));
  CHECK(!parse_unit_quantity("10 ps", "s"));
}

TEST_CASE("parse_unit_quantity distinguishes milli from mega") {
  CHECK(parse_unit_quantity("1mA", "A") == 1e-3);
  CHECK(parse_unit_quantity("1MHz", "Hz") == 1e6);
  CHECK(parse_unit_quantity("2kHz", "Hz") == 2e3);
  CHECK(parse_unit_quantity("3THz", "Hz") == 3e12);
}
