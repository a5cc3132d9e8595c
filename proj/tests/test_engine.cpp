#include "qfp/engine.hpp"

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "qfp/netlist.hpp"
#include "qfp/numeric.hpp"

using namespace qfp;

namespace {

constexpr const char* kJjModelLine =
    ".model jstd jj(Ic=50u C=0.15p Rsg=100 Rn=1.6 Vg=2.8m)\n";

RunResult run(const std::string& text, double dt, double t_stop,
              const std::vector<Probe>& probes) {
  SimConfig cfg;
  cfg.dt = dt;
  cfg.t_stop = t_stop;
  RunResult r = run_transient(parse_netlist(text), cfg, probes);
  REQUIRE(r.converged);
  return r;
}

}  // namespace

TEST_CASE("rc step response matches the analytic exponential") {
  // tau = R*C = 1 ns, 1 mV step applied at t = 0 from a quiescent start
  const double tau = 1e-9, v0 = 1e-3, dt = 1e-12;
  auto r = run(
      "* rc step\n"
      "v1 in 0 dc 1m\n"
      "r1 in out 1k\n"
      "c1 out 0 1p\n"
      ".end\n",
      dt, 3e-9, {NodeVoltageProbe{"out"}, BranchCurrentProbe{"r1"}, BranchCurrentProbe{"c1"}});

  CHECK(r.waveform.samples() == 3001);
  const auto& v = r.waveform.column("V(out)");
  for (size_t k = 200; k < v.size(); k += 100) {
    double t = r.waveform.time(k);
    double expect = v0 * (1.0 - std::exp(-t / tau));
    CHECK(std::fabs(v[k] - expect) < 0.005 * v0);
  }
  // series branch: resistor and capacitor carry the same current
  double t_probe = 2e-9;
  double i_expect = v0 / 1e3 * std::exp(-t_probe / tau);
  CHECK(r.waveform.at("I(r1)", t_probe) == doctest::Approx(i_expect).epsilon(0.01));
  CHECK(r.waveform.at("I(c1)", t_probe) == doctest::Approx(i_expect).epsilon(0.01));
}

TEST_CASE("rc response to a ramped source matches the analytic form") {
  // dc value reached over 1 ns; inside the ramp v(t) = m(t - tau + tau e^{-t/tau})
  const double tau = 1e-9, dt = 1e-12, slope = 1e-3 / 1e-9;
  auto r = run(
      "* rc ramp\n"
      "v1 in 0 dc 1m ramp=1n\n"
      "r1 in out 1k\n"
      "c1 out 0 1p\n"
      ".end\n",
      dt, 1e-9, {NodeVoltageProbe{"out"}});
  const auto& v = r.waveform.column("V(out)");
  for (size_t k = 100; k <= 1000; k += 100) {
    double t = r.waveform.time(k);
    double expect = slope * (t - tau + tau * std::exp(-t / tau));
    CHECK(v[k] == doctest::Approx(expect).epsilon(0.005));
  }
}

TEST_CASE("lc tank rings at its resonant frequency") {
  // parallel LC hit with a current step: f = 1/(2 pi sqrt(LC)) = 5.0329 GHz
  const double dt = 5e-13;
  auto r = run(
      "* lc tank\n"
      "i1 0 a dc 1u\n"
      "l1 a 0 1n\n"
      "c1 a 0 1p\n"
      ".end\n",
      dt, 4e-9, {NodeVoltageProbe{"a"}});
  const auto& v = r.waveform.column("V(a)");

  std::vector<double> crossings;
  for (size_t k = 1; k < v.size(); ++k) {
    double t = r.waveform.time(k);
    if (t < 0.1e-9) continue;
    if (v[k - 1] < 0.0 && v[k] >= 0.0) {
      crossings.push_back(r.waveform.time(k - 1) + dt * v[k - 1] / (v[k - 1] - v[k]));
    }
  }
  REQUIRE(crossings.size() >= 10);
  double f_est = static_cast<double>(crossings.size() - 1) /
                 (crossings.back() - crossings.front());
  double f_expect = 1.0 / (2.0 * std::numbers::pi * std::sqrt(1e-9 * 1e-12));
  CHECK(f_est == doctest::Approx(f_expect).epsilon(0.005));

  // peak amplitude I*sqrt(L/C), preserved by the integrator
  double vmax = 0.0;
  for (double s : v) vmax = std::max(vmax, s);
  CHECK(vmax == doctest::Approx(1e-6 * std::sqrt(1e-9 / 1e-12)).epsilon(0.005));

  // lossless: source work equals stored energy at all times
  CHECK(r.audit.dissipated == 0.0);
  CHECK(r.audit.relative_residual() < 1e-3);
}

TEST_CASE("an all-zero circuit stays exactly zero") {
  auto r = run(
      "* silence\n"
      "v1 a 0 dc 0\n"
      "r1 a b 50\n"
      "l1 b 0 1p\n"
      "c1 a 0 1p\n"
      ".end\n",
      1e-12, 1e-10,
      {NodeVoltageProbe{"a"}, NodeVoltageProbe{"b"}, BranchCurrentProbe{"l1"},
       BranchCurrentProbe{"v1"}});
  for (size_t c = 0; c < r.waveform.column_count(); ++c) {
    for (double s : r.waveform.column(c)) CHECK(s == 0.0);
  }
}

TEST_CASE("junction operating point sits at asin of the bias ratio") {
  std::string text =
      "* biased junction\n" + std::string(kJjModelLine) +
      "i1 0 j dc 25u\n"
      "b1 j 0 jstd\n"
      ".end\n";
  SUBCASE("static solve") {
    SimConfig cfg;  // t_stop = 0 -> operating point
    auto r = run_transient(parse_netlist(text), cfg, {JunctionPhaseProbe{"b1"}});
    REQUIRE(r.converged);
    CHECK(r.waveform.samples() == 1);
    CHECK(r.waveform.column("PHI(b1)")[0] == doctest::Approx(std::asin(0.5)).epsilon(1e-9));
  }
  SUBCASE("transient settles to the same point") {
    std::string ramped =
        "* biased junction\n" + std::string(kJjModelLine) +
        "i1 0 j dc 25u ramp=1n\n"
        "b1 j 0 jstd\n"
        ".end\n";
    const double dt = 1e-13;
    auto r = run(ramped, dt, 5e-9, {JunctionPhaseProbe{"b1"}, NodeVoltageProbe{"j"}});
    const auto& phi = r.waveform.column("PHI(b1)");
    const auto& v = r.waveform.column("V(j)");
    CHECK(phi.back() == doctest::Approx(std::asin(0.5)).epsilon(1e-4));
    CHECK(std::fabs(v.back()) < 1e-9);

    // phase-voltage consistency: phi(t) - phi(t-dt) = (dt/2)(2pi/Phi0)(v(t)+v(t-dt))
    double gamma = 0.5 * dt * 2.0 * std::numbers::pi / kPhi0;
    double worst = 0.0;
    for (size_t k = 1; k < phi.size(); ++k) {
      worst = std::max(worst, std::fabs(phi[k] - phi[k - 1] - gamma * (v[k] + v[k - 1])));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("halving dt quarters the error of a smooth transient") {
  // sine-driven rc with an exact closed form; trapezoidal rule is second order
  const double r_ohm = 100.0, c_f = 1e-12, i0 = 1e-6, f_hz = 5e9;
  const double w = 2.0 * std::numbers::pi * f_hz, tau = r_ohm * c_f;
  std::string text =
      "* smooth convergence\n"
      "i1 0 a sin(0 1u 5g 0)\n"
      "r1 a 0 100\n"
      "c1 a 0 1p\n"
      ".end\n";
  auto exact = [&](double t) {
    double d = w * w + 1.0 / (tau * tau);
    return (i0 / c_f) *
           ((1.0 / tau) * std::sin(w * t) - w * std::cos(w * t) + w * std::exp(-t / tau)) / d;
  };
  const double t_star = 1e-9;
  auto err_at = [&](double dt) {
    auto r = run(text, dt, t_star, {NodeVoltageProbe{"a"}});
    return std::fabs(r.waveform.column("V(a)").back() - exact(t_star));
  };
  double e2 = err_at(2e-12);
  double e1 = err_at(1e-12);
  double ratio = e2 / e1;
  CHECK(ratio > 3.2);
  CHECK(ratio < 4.8);
}

TEST_CASE("matched transmission line delays without reflection") {
  const double dt = 1e-13, td = 23.7e-12, f = 5e9;
  const double w = 2.0 * std::numbers::pi * f;
  auto r = run(
      "* matched line\n"
      "v1 in 0 sin(0 1m 5g 0)\n"
      "r1 in a 50\n"
      "t1 a 0 b 0 z0=50 td=23.7p\n"
      "r2 b 0 50\n"
      ".end\n",
      dt, 2e-9, {NodeVoltageProbe{"a"}, NodeVoltageProbe{"b"}});
  const auto& vb = r.waveform.column("V(b)");
  double worst = 0.0;
  for (size_t k = 0; k < vb.size(); ++k) {
    double t = r.waveform.time(k);
    double expect = t >= td ? 0.5e-3 * std::sin(w * (t - td)) : 0.0;
    worst = std::max(worst, std::fabs(vb[k] - expect));
  }
  CHECK(worst < 0.005 * 0.5e-3);
  // launch side is a clean half divider the whole time
  const auto& va = r.waveform.column("V(a)");
  double worst_a = 0.0;
  for (size_t k = 0; k < va.size(); ++k) {
    double t = r.waveform.time(k);
    worst_a = std::max(worst_a, std::fabs(va[k] - 0.5e-3 * std::sin(w * t)));
  }
  CHECK(worst_a < 0.005 * 0.5e-3);
  CHECK(r.audit.relative_residual() < 1e-3);
}

TEST_CASE("open-ended line doubles the incident wave") {
  const double dt = 1e-13, td = 17.3e-12, f = 5e9;
  const double w = 2.0 * std::numbers::pi * f;
  auto r = run(
      "* open line\n"
      "v1 in 0 sin(0 1m 5g 0)\n"
      "r1 in a 50\n"
      "t1 a 0 b 0 z0=50 td=17.3p\n"
      ".end\n",
      dt, 1e-9, {NodeVoltageProbe{"b"}});
  const auto& vb = r.waveform.column("V(b)");
  double worst = 0.0;
  for (size_t k = 0; k < vb.size(); ++k) {
    double t = r.waveform.time(k);
    double expect = t >= td ? 1e-3 * std::sin(w * (t - td)) : 0.0;
    worst = std::max(worst, std::fabs(vb[k] - expect));
  }
  CHECK(worst < 0.005 * 1e-3);
}

TEST_CASE("energy audit balances for a mixed circuit") {
  std::string text =
      "* mixed energy\n" + std::string(kJjModelLine) +
      "v1 in 0 sin(0 1m 5g 0 2)\n"
      "r1 in a 50\n"
      "t1 a 0 b 0 z0=50 td=23.7p\n"
      "r2 b jn 10\n"
      "c2 b 0 0.1p\n"
      "b1 jn 0 jstd\n"
      "l1 jn 0 5p\n"
      ".end\n";
  auto r = run(text, 1e-13, 2e-9, {NodeVoltageProbe{"jn"}});
  CHECK(r.audit.source_input > 0.0);
  CHECK(r.audit.dissipated > 0.0);
  CHECK(r.audit.relative_residual() < 1e-3);
}

TEST_CASE("dc operating point treats a line as a wire") {
  auto r = run(
      "* dc through line\n"
      "v1 in 0 dc 1m\n"
      "r1 in a 100\n"
      "t1 a 0 b 0 z0=50 td=10p\n"
      "r2 b 0 100\n"
      ".end\n",
      1e-12, 0.0, {NodeVoltageProbe{"a"}, NodeVoltageProbe{"b"}});
  CHECK(r.waveform.column("V(a)")[0] == doctest::Approx(0.5e-3).epsilon(1e-9));
  CHECK(r.waveform.column("V(b)")[0] == doctest::Approx(0.5e-3).epsilon(1e-9));
}

TEST_CASE("device power probes integrate to analytic energies") {
  // steady sine into a resistor: E = A^2/(2R) per unit time
  auto r = run(
      "* sine resistor\n"
      "v1 a 0 sin(0 1m 5g 0)\n"
      "r1 a 0 100\n"
      ".end\n",
      1e-13, 2e-9, {DevicePowerProbe{"r1"}, DevicePowerProbe{"v1"}});
  // window of exactly five periods, away from start
  auto rep = energy_accounting(r.waveform, 1e-9, 2e-9);
  double expect = 1e-6 / (2.0 * 100.0) * 1e-9;
  CHECK(rep.per_device.at("r1") == doctest::Approx(expect).epsilon(0.005));
  // the source absorbs exactly what the resistor burns
  CHECK(rep.per_device.at("v1") == doctest::Approx(-expect).epsilon(0.005));
  // source and resistor currents are equal and opposite sample by sample
  CHECK(std::fabs(rep.total) < 1e-6 * expect);

  CHECK_THROWS_AS(energy_accounting(r.waveform, -1e-9, 1e-9), SimError);
  CHECK_THROWS_AS(energy_accounting(r.waveform, 1e-9, 3e-9), SimError);
}

TEST_CASE("structural errors are reported with their codes") {
  SUBCASE("floating node behind a capacitor") {
    try {
      run_transient(parse_netlist("* float\ni1 0 a dc 1u\nc1 a 0 1p\n.end\n"), SimConfig{}, {});
      FAIL("expected SimError");
    } catch (const SimError& e) {
      CHECK(e.code() == SimErrorCode::SingularTopology);
    }
  }
  SUBCASE("inconsistent voltage source loop") {
    SimConfig cfg;
    cfg.t_stop = 1e-11;
    cfg.dt = 1e-12;
    try {
      run_transient(parse_netlist("* loop\nv1 a 0 dc 1m\nv2 a 0 dc 2m\n.end\n"), cfg, {});
      FAIL("expected SimError");
    } catch (const SimError& e) {
      CHECK(e.code() == SimErrorCode::SingularTopology);
    }
  }
  SUBCASE("line delay shorter than the step") {
    SimConfig cfg;
    cfg.dt = 1e-12;
    cfg.t_stop = 1e-11;
    try {
      run_transient(
          parse_netlist("* short line\nv1 a 0 dc 1m\nr1 a 0 50\nt1 a 0 b 0 z0=50 td=0.1p\n"
                        "r2 b 0 50\n.end\n"),
          cfg, {});
      FAIL("expected SimError");
    } catch (const SimError& e) {
      CHECK(e.code() == SimErrorCode::HistoryUnderflow);
    }
  }
  SUBCASE("missing probe") {
    try {
      run_transient(parse_netlist("* ok\nv1 a 0 dc 1m\nr1 a 0 50\n.end\n"), SimConfig{},
                    {NodeVoltageProbe{"zz"}});
      FAIL("expected SimError");
    } catch (const SimError& e) {
      CHECK(e.code() == SimErrorCode::ProbeMissing);
    }
  }
  SUBCASE("bad config") {
    SimConfig cfg;
    cfg.dt = 0.0;
    try {
      run_transient(parse_netlist("* ok\nv1 a 0 dc 1m\nr1 a 0 50\n.end\n"), cfg, {});
      FAIL("expected SimError");
    } catch (const SimError& e) {
      CHECK(e.code() == SimErrorCode::InvalidConfig);
    }
  }
}

TEST_CASE("repeated runs are bitwise identical") {
  std::string text =
      "* determinism\n" + std::string(kJjModelLine) +
      "v1 in 0 sin(0 1m 5g 0 2)\n"
      "r1 in a 50\n"
      "b1 a 0 jstd\n"
      "l1 a 0 5p\n"
      ".end\n";
  std::vector<Probe> probes{NodeVoltageProbe{"a"}, JunctionPhaseProbe{"b1"}};
  auto a = run(text, 1e-13, 1e-9, probes);
  auto b = run(text, 1e-13, 1e-9, probes);
  REQUIRE(a.waveform.samples() == b.waveform.samples());
  for (size_t c = 0; c < a.waveform.column_count(); ++c) {
    const auto& ca = a.waveform.column(c);
    const auto& cb = b.waveform.column(c);
    for (size_t k = 0; k < ca.size(); ++k) {
      CHECK(ca[k] == cb[k]);
    }
  }
}
