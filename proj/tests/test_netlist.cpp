#include "qfp/netlist.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "netlist_gen.hpp"

using namespace qfp;

namespace {

NetlistErrorCode code_of(const std::string& text) {
  try {
    parse_netlist(text);
  } catch (const NetlistError& e) {
    return e.code();
  }
  FAIL("expected NetlistError");
  return NetlistErrorCode::BadSyntax;
}

}  // namespace

TEST_CASE("parses a minimal rc netlist") {
  Netlist n = parse_netlist(
      "* rc divider\n"
      "v1 in 0 dc 1m\n"
      "r1 in out 50\n"
      "c1 out 0 1p\n"
      ".end\n");
  CHECK(n.title == "rc divider");
  REQUIRE(n.devices.size() == 3);
  CHECK(n.devices[0].name == "v1");
  CHECK(n.devices[1].terminals == std::vector<std::string>{"in", "out"});
  CHECK(std::get<Resistor>(n.devices[1].body).resistance == 50.0);
  CHECK(std::get<Capacitor>(n.devices[2].body).capacitance == 1e-12);
}

TEST_CASE("parser is case-insensitive and handles continuations") {
  Netlist n = parse_netlist(
      "* Case Test\n"
      "R1 A B 100\n"
      "V1 A 0 SIN(0 1M\n"
      "+ 5G 0)\n"
      "* a comment between devices\n"
      "C1 B 0 2P\n"
      ".END\n");
  REQUIRE(n.devices.size() == 3);
  CHECK(n.devices[0].name == "r1");
  CHECK(n.devices[0].terminals == std::vector<std::string>{"a", "b"});
  auto& sine = std::get<SineSpec>(std::get<VoltageSource>(n.devices[1].body).wave);
  CHECK(sine.amplitude == 1e-3);
  CHECK(sine.frequency == 5e9);
}

TEST_CASE("parses models junctions mutuals and lines") {
  Netlist n = parse_netlist(
      "* full device set\n"
      ".model jstd jj(Ic=50u C=0.15p Rsg=100 Rn=1.6 Vg=2.8m)\n"
      "l1 a 0 1.6p\n"
      "l2 b 0 1.6p\n"
      "k1 l1 l2 0.5\n"
      "b1 a 0 jstd area=2\n"
      "b2 b 0 jstd\n"
      "t1 a 0 b 0 z0=50 td=10p\n"
      "i1 0 a pwl(0 0 1n 10u)\n"
      ".end\n");
  REQUIRE(n.models.count("jstd") == 1);
  CHECK(n.models.at("jstd").critical_current == 50e-6);
  CHECK(n.models.at("jstd").v_gap == 2.8e-3);
  auto& k = std::get<MutualCoupling>(n.devices[2].body);
  CHECK(k.first == "l1");
  CHECK(k.second == "l2");
  CHECK(k.k == 0.5);
  CHECK(std::get<Junction>(n.devices[3].body).area == 2.0);
  CHECK(std::get<Junction>(n.devices[4].body).area == 1.0);
  auto& tl = std::get<TransmissionLine>(n.devices[5].body);
  CHECK(tl.z0 == 50.0);
  CHECK(tl.delay == 1e-11);
}

TEST_CASE("parses subcircuits and flattens them") {
  Netlist n = parse_netlist(
      "* nested cells\n"
      ".subckt stage in out\n"
      "r1 in mid 10\n"
      "r2 mid out 10\n"
      ".ends\n"
      "x1 stage a b\n"
      "x2 stage b 0\n"
      ".end\n");
  Netlist flat = flatten(n);
  CHECK(flat.subckts.empty());
  REQUIRE(flat.devices.size() == 4);
  CHECK(flat.devices[0].name == "rx1.r1");
  CHECK(flat.devices[0].terminals == std::vector<std::string>{"a", "x1.mid"});
  CHECK(flat.devices[2].name == "rx2.r1");
  CHECK(flat.devices[3].terminals == std::vector<std::string>{"x2.mid", "0"});
  // flattened output is itself a valid netlist
  Netlist reparsed = parse_netlist(serialize(flat));
  CHECK(reparsed == flat);
}

TEST_CASE("flatten remaps mutual coupling references") {
  Netlist n = parse_netlist(
      "* coupled pair in a cell\n"
      ".subckt duo a b\n"
      "l1 a 0 2p\n"
      "l2 b 0 2p\n"
      "k1 l1 l2 0.3\n"
      ".ends\n"
      "x1 duo p q\n"
      "r1 p 0 10\n"
      "r2 q 0 10\n"
      ".end\n");
  Netlist flat = flatten(n);
  const auto* k = std::get_if<MutualCoupling>(&flat.devices[2].body);
  REQUIRE(k != nullptr);
  CHECK(k->first == "lx1.l1");
  CHECK(k->second == "lx1.l2");
}

TEST_CASE("waveform evaluation") {
  SUBCASE("dc with ramp") {
    SourceWaveform w = DcSpec{2e-3, 1e-9};
    CHECK(eval_waveform(w, 0.0) == 0.0);
    CHECK(eval_waveform(w, 0.5e-9) == doctest::Approx(1e-3));
    CHECK(eval_waveform(w, 2e-9) == 2e-3);
    CHECK(eval_waveform(DcSpec{2e-3, 0.0}, 0.0) == 2e-3);
  }
  SUBCASE("sine with delay and ramp cycles") {
    SineSpec s{1e-3, 2e-3, 1e9, 0.25e-9, 0.0};
    double t = 0.75e-9;  // half period past the delay
    // offset + amp*sin(2pi f (t - delay))
    CHECK(eval_waveform(SourceWaveform{s}, t) ==
          doctest::Approx(1e-3 + 2e-3 * std::sin(2 * M_PI * 1e9 * 0.5e-9)).epsilon(1e-12));
    s.ramp_cycles = 2.0;
    // envelope scales the whole value while t < 2 periods
    double early = eval_waveform(SourceWaveform{s}, 1e-9);
    CHECK(early == doctest::Approx(0.5 * (1e-3 + 2e-3 * std::sin(2 * M_PI * 0.75))));
    double late = eval_waveform(SourceWaveform{s}, 5e-9);
    CHECK(late == doctest::Approx(1e-3 + 2e-3 * std::sin(2 * M_PI * 1e9 * (5e-9 - 0.25e-9))));
  }
  SUBCASE("pwl clamps outside its span") {
    PwlSpec p{{{1e-9, 0.0}, {2e-9, 1e-3}}};
    CHECK(eval_waveform(SourceWaveform{p}, 0.0) == 0.0);
    CHECK(eval_waveform(SourceWaveform{p}, 1.5e-9) == doctest::Approx(0.5e-3));
    CHECK(eval_waveform(SourceWaveform{p}, 3e-9) == 1e-3);
  }
  SUBCASE("bits holds levels and ramps at boundaries") {
    BitSpec b{"0110", 1e-9, 0.1e-9, 1e-3, -1e-3};
    SourceWaveform w{b};
    CHECK(eval_waveform(w, 0.0) == -1e-3);             // bit 0 low, no initial transition
    CHECK(eval_waveform(w, 0.5e-9) == -1e-3);
    CHECK(eval_waveform(w, 1.05e-9) == doctest::Approx(0.0));  // halfway through the rise
    CHECK(eval_waveform(w, 1.5e-9) == 1e-3);
    CHECK(eval_waveform(w, 2.5e-9) == 1e-3);           // no transition between equal bits
    CHECK(eval_waveform(w, 3.5e-9) == -1e-3);
    CHECK(eval_waveform(w, 9e-9) == -1e-3);            // clamps past the pattern
  }
}

TEST_CASE("diagnostics carry codes and positions") {
  CHECK(code_of("* t\nq1 a 0 5\n.end\n") == NetlistErrorCode::UnknownDeviceKind);
  CHECK(code_of("* t\nr1 a 0 5\nr1 a 0 5\n.end\n") == NetlistErrorCode::DuplicateName);
  CHECK(code_of("* t\nr1 a 0 abc\n.end\n") == NetlistErrorCode::BadNumber);
  CHECK(code_of("* t\nr1 a 0 -5\n.end\n") == NetlistErrorCode::InvalidValue);
  CHECK(code_of("* t\nr1 a 0 5\n") == NetlistErrorCode::BadSyntax);  // missing .end
  CHECK(code_of("* t\n.subckt s a\nr1 a 0 5\n.end\n") == NetlistErrorCode::UnbalancedSubckt);
  CHECK(code_of("* t\nl1 a 0 1p\nk1 l1 l9 0.4\n.end\n") ==
        NetlistErrorCode::DanglingMutualReference);
  CHECK(code_of("* t\nb1 a 0 nosuch\n.end\n") == NetlistErrorCode::UnknownModel);
  CHECK(code_of("* t\n.subckt s a b\nr1 a b 5\n.ends\nx1 s q\n.end\n") ==
        NetlistErrorCode::ArityMismatch);
  CHECK(code_of("* t\nr1 a 0\n.end\n") == NetlistErrorCode::BadSyntax);
  CHECK(code_of("* t\nl1 a 0 1p\nl2 b 0 1p\nk1 l1 l2 1.5\n.end\n") ==
        NetlistErrorCode::InvalidValue);
  CHECK(code_of("* t\nt1 a 0 b 0 z0=50 td=0\n.end\n") == NetlistErrorCode::InvalidValue);

  try {
    parse_netlist("* t\nr1 a 0 5\nbogus\n.end\n");
    FAIL("expected throw");
  } catch (const NetlistError& e) {
    CHECK(e.line() == 3);
    CHECK(e.column() >= 1);
  }
}

TEST_CASE("recursive subcircuits are rejected") {
  Netlist n = parse_netlist(
      "* self reference\n"
      ".subckt a p q\n"
      "x1 b p q\n"
      ".ends\n"
      ".subckt b p q\n"
      "x1 a p q\n"
      ".ends\n"
      "x1 a n1 n2\n"
      "r1 n1 0 5\n"
      "r2 n2 0 5\n"
      ".end\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(flatten(n)), doctest::Contains("RecursionDetected"),
                       NetlistError);
}

TEST_CASE("serialize round-trips handwritten netlists") {
  const char* text =
      "* round trip sample\n"
      ".model jx jj(Ic=100u C=0.3p Rsg=80 Rn=2 Vg=2.7m)\n"
      "v1 in 0 sin(0 1.25m 5g 0 2)\n"
      "i1 0 q bits(0110 200p 20p 16u -16u)\n"
      "b1 q 0 jx area=2.5\n"
      "t1 in 0 q 0 z0=50 td=35p\n"
      ".end\n";
  Netlist n = parse_netlist(text);
  Netlist again = parse_netlist(serialize(n));
  CHECK(again == n);
}

TEST_CASE("serialize round-trips generated netlists") {
  std::mt19937_64 rng(20260817);
  for (int i = 0; i < 250; ++i) {
    Netlist n = testgen::rand_netlist(rng);
    CAPTURE(i);
    Netlist again = parse_netlist(serialize(n));
    CHECK(again == n);
  }
}

TEST_CASE("flatten then reparse preserves behavior-relevant structure") {
  std::mt19937_64 rng(777);
  for (int i = 0; i < 100; ++i) {
    Netlist n = testgen::rand_netlist(rng);
    Netlist flat = flatten(n);
    CAPTURE(i);
    CHECK(parse_netlist(serialize(flat)) == flat);
  }
}

TEST_CASE("malformed inputs throw rather than crash") {
  std::mt19937_64 rng(4242);
  std::string base =
      "* fuzz base\n"
      ".model jstd jj(Ic=50u C=0.15p Rsg=100 Rn=1.6 Vg=2.8m)\n"
      ".subckt cell a b\n"
      "l1 a m 2p\n"
      "l2 m b 2p\n"
      "k1 l1 l2 0.4\n"
      ".ends\n"
      "x1 cell n1 n2\n"
      "b1 n1 0 jstd\n"
      "v1 n2 0 sin(0 1m 5g 0 2)\n"
      ".end\n";
  std::uniform_int_distribution<int> pos(0, static_cast<int>(base.size()) - 1);
  std::uniform_int_distribution<int> ch(32, 126);
  for (int i = 0; i < 500; ++i) {
    std::string mutated = base;
    int edits = 1 + (i % 4);
    for (int e = 0; e < edits; ++e) {
      int p = pos(rng);
      switch (rng() % 3) {
        case 0: mutated[static_cast<size_t>(p)] = static_cast<char>(ch(rng)); break;
        case 1: mutated.erase(static_cast<size_t>(p), 1); break;
        default: mutated.insert(static_cast<size_t>(p), 1, static_cast<char>(ch(rng)));
      }
    }
    try {
      Netlist n = parse_netlist(mutated);
      validate(n);  // parsed mutants must still pass their own validation
    } catch (const NetlistError&) {
      // expected for most mutants
    }
  }
}
