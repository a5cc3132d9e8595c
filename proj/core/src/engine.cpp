#include "qfp/engine.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "qfp/numeric.hpp"

namespace qfp {

// ---------------------------------------------------------------------------
// Waveform
// ---------------------------------------------------------------------------

Waveform::Waveform(double dt, double t0, std::vector<std::string> labels)
    : dt_(dt), t0_(t0), labels_(std::move(labels)), columns_(labels_.size()) {}

const std::vector<double>& Waveform::column(const std::string& label) const {
  for (size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return columns_[i];
  }
  throw SimError(SimErrorCode::ProbeMissing, "no column " + label);
}

bool Waveform::has_column(const std::string& label) const {
  return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

double Waveform::at(const std::string& label, double t) const {
  const auto& col = column(label);
  if (col.empty()) throw SimError(SimErrorCode::WindowOutsideRun, "empty waveform");
  double f = (t - t0_) / dt_;
  if (f <= 0.0) return col.front();
  if (f >= static_cast<double>(col.size() - 1)) return col.back();
  size_t i = static_cast<size_t>(f);
  double u = f - static_cast<double>(i);
  return col[i] * (1.0 - u) + col[i + 1] * u;
}

void Waveform::append_sample(const std::vector<double>& values) {
  for (size_t i = 0; i < columns_.size(); ++i) columns_[i].push_back(values[i]);
}

std::string probe_label(const Probe& p) {
  return std::visit(
      [](const auto& q) -> std::string {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, NodeVoltageProbe>) return "V(" + q.node + ")";
        if constexpr (std::is_same_v<T, BranchCurrentProbe>) return "I(" + q.device + ")";
        if constexpr (std::is_same_v<T, JunctionPhaseProbe>) return "PHI(" + q.device + ")";
        if constexpr (std::is_same_v<T, DevicePowerProbe>) return "P(" + q.device + ")";
      },
      p);
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

std::string_view to_string(SimErrorCode code) {
  switch (code) {
    case SimErrorCode::SingularTopology: return "SingularTopology";
    case SimErrorCode::NewtonDivergence: return "NewtonDivergence";
    case SimErrorCode::HistoryUnderflow: return "HistoryUnderflow";
    case SimErrorCode::ProbeMissing: return "ProbeMissing";
    case SimErrorCode::WindowOutsideRun: return "WindowOutsideRun";
    case SimErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "UnknownError";
}

namespace {
std::string sim_error_text(SimErrorCode code, const std::string& detail, double t, int iters) {
  std::ostringstream os;
  os << to_string(code);
  if (!detail.empty()) os << ": " << detail;
  if (t >= 0.0) os << " at t=" << format_quantity(t) << "s";
  if (iters >= 0) os << " after " << iters << " iterations";
  return os.str();
}
}  // namespace

SimError::SimError(SimErrorCode code, const std::string& detail, double t, int iterations)
    : std::runtime_error(sim_error_text(code, detail, t, iterations)),
      code_(code),
      time_(t),
      iterations_(iterations) {}

double EnergyAudit::relative_residual() const {
  double lhs = source_input - dissipated - (stored - initial_stored) - tl_in_flight;
  return std::fabs(lhs) / std::max(std::fabs(source_input), 1e-18);
}

// ---------------------------------------------------------------------------
// Simulator internals
// ---------------------------------------------------------------------------

namespace {

class Ring {
 public:
  void init(size_t cap) {
    buf_.assign(cap, 0.0);
    head_ = 0;
    count_ = 0;
  }
  void push(double v) {
    buf_[head_] = v;
    head_ = (head_ + 1) % buf_.size();
    count_ = std::min(count_ + 1, buf_.size());
  }
  // k samples back from the most recent push; 0 before the run started.
  double back(size_t k) const {
    if (k >= count_) return 0.0;
    size_t idx = (head_ + buf_.size() - 1 - k) % buf_.size();
    return buf_[idx];
  }

 private:
  std::vector<double> buf_;
  size_t head_ = 0;
  size_t count_ = 0;
};

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(size_t n) : parent(n) {
    for (size_t i = 0; i < n; ++i) parent[i] = static_cast<int>(i);
  }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

constexpr double kTwoPiOverPhi0 = 2.0 * std::numbers::pi / kPhi0;

struct VarSlot {
  int slot = -1;     // index into the sparse value array
  double* value = nullptr;
};

}  // namespace

class SimulatorImpl {
 public:
  SimConfig cfg;

  // --- node table ---
  std::vector<std::string> node_names;
  std::map<std::string, int> node_index;  // ground "0" absent, index -1 semantics

  struct Res {
    std::string name;
    int n1, n2;
    double g;
    double p_prev = 0.0;
    double e_diss = 0.0;
  };
  struct Cap {
    std::string name;
    int n1, n2;
    double c, geq;
    double vd = 0.0;   // accepted voltage
    double ic = 0.0;   // accepted companion current
  };
  struct Ind {
    std::string name;
    int n1, n2;
    int li;  // index within the inductor block
  };
  struct Vsrc {
    std::string name;
    int n1, n2;
    int xi;
    SourceWaveform wave;
    double p_prev = 0.0;
    double e_in = 0.0;
  };
  struct Isrc {
    std::string name;
    int n1, n2;
    SourceWaveform wave;
    double p_prev = 0.0;
    double e_in = 0.0;
  };
  struct Tline {
    std::string name;
    int a1, a2, b1, b2;
    int xa, xb;  // port current unknowns
    double z0, td;
    Ring ha, hb;  // s = v + z0*i pushed per accepted step, per port
  };
  struct Jj {
    std::string name;
    int n1, n2;
    int xphi;  // phase unknown index
    double ic, cj, geq, gsg, gn, vg, blend_w, ej;
    double vd = 0.0;
    double icap = 0.0;
    double phi = 0.0;
    double p_prev = 0.0;  // resistive channel only
    double e_diss = 0.0;
  };

  std::vector<Res> resistors;
  std::vector<Cap> caps;
  std::vector<Ind> inductors;
  std::vector<Vsrc> vsrcs;
  std::vector<Isrc> isrcs;
  std::vector<Tline> tlines;
  std::vector<Jj> jjs;

  Eigen::MatrixXd lmat;         // inductor block inductance matrix
  Eigen::VectorXd il_old;       // accepted inductor currents
  Eigen::VectorXd vl_old;       // accepted inductor branch voltages

  int nn = 0, nl = 0, nv = 0, nt = 0, nj = 0, n_total = 0;
  int off_l = 0, off_v = 0, off_t = 0, off_phi = 0;

  double t = 0.0;
  Eigen::VectorXd x;       // accepted state
  double gamma = 0.0;      // (dt/2) * 2*pi/Phi0

  // --- sparse systems ---
  struct System {
    Eigen::SparseMatrix<double> a;
    std::vector<double> base;  // constant part of the value array
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    bool analyzed = false;
    int find_slot(int row, int col) const {
      for (int k = a.outerIndexPtr()[col]; k < a.outerIndexPtr()[col + 1]; ++k) {
        if (a.innerIndexPtr()[k] == row) return k;
      }
      throw SimError(SimErrorCode::SingularTopology, "missing matrix slot");
    }
  };
  System trans;  // transient companion system
  System stat;   // static operating-point system
  bool stat_built = false;

  // per-junction variable slots: [kcl x vd 4][kcl x phi 2], rows n1,n2
  struct JjSlots {
    int g11 = -1, g12 = -1, g21 = -1, g22 = -1;
    int s1 = -1, s2 = -1;
  };
  std::vector<JjSlots> jj_slots_trans, jj_slots_stat;

  Eigen::VectorXd b, f, dx, x_new;

  double e_init_stored = 0.0;

  // -------------------------------------------------------------------------

  SimulatorImpl(const Netlist& flat, const SimConfig& config) : cfg(config) {
    if (cfg.dt <= 0) throw SimError(SimErrorCode::InvalidConfig, "dt must be > 0");
    if (cfg.max_newton_iters < 2)
      throw SimError(SimErrorCode::InvalidConfig, "max_newton_iters must be >= 2");
    build(flat);
    gamma = 0.5 * cfg.dt * kTwoPiOverPhi0;
    x = Eigen::VectorXd::Zero(n_total);
    il_old = Eigen::VectorXd::Zero(nl);
    vl_old = Eigen::VectorXd::Zero(nl);
    b.resize(n_total);
    f.resize(n_total);
    dx.resize(n_total);
    x_new.resize(n_total);
    build_transient_system();
    e_init_stored = stored_energy();
  }

  int node_of(const std::string& name, std::map<std::string, int>& table) {
    if (name == "0") return -1;
    auto it = table.find(name);
    if (it != table.end()) return it->second;
    int idx = static_cast<int>(node_names.size());
    node_names.push_back(name);
    table.emplace(name, idx);
    return idx;
  }

  void build(const Netlist& flat) {
    std::map<std::string, int> inductor_index;

    for (const auto& d : flat.devices) {
      if (std::holds_alternative<SubcktInstance>(d.body))
        throw SimError(SimErrorCode::InvalidConfig, "netlist not flattened: " + d.name);
    }

    for (const auto& d : flat.devices) {
      std::visit(
          [&](const auto& body) {
            using T = std::decay_t<decltype(body)>;
            if constexpr (std::is_same_v<T, Resistor>) {
              resistors.push_back({d.name, node_of(d.terminals[0], node_index),
                                   node_of(d.terminals[1], node_index), 1.0 / body.resistance});
            } else if constexpr (std::is_same_v<T, Capacitor>) {
              caps.push_back({d.name, node_of(d.terminals[0], node_index),
                              node_of(d.terminals[1], node_index), body.capacitance,
                              2.0 * body.capacitance / cfg.dt});
            } else if constexpr (std::is_same_v<T, Inductor>) {
              Ind ind{d.name, node_of(d.terminals[0], node_index),
                      node_of(d.terminals[1], node_index), static_cast<int>(inductors.size())};
              inductor_index[d.name] = ind.li;
              inductors.push_back(ind);
            } else if constexpr (std::is_same_v<T, VoltageSource>) {
              vsrcs.push_back({d.name, node_of(d.terminals[0], node_index),
                               node_of(d.terminals[1], node_index), 0, body.wave});
            } else if constexpr (std::is_same_v<T, CurrentSource>) {
              isrcs.push_back({d.name, node_of(d.terminals[0], node_index),
                               node_of(d.terminals[1], node_index), body.wave});
            } else if constexpr (std::is_same_v<T, TransmissionLine>) {
              if (body.delay < cfg.dt)
                throw SimError(SimErrorCode::HistoryUnderflow,
                               d.name + ": line delay shorter than dt");
              Tline tl;
              tl.name = d.name;
              tl.a1 = node_of(d.terminals[0], node_index);
              tl.a2 = node_of(d.terminals[1], node_index);
              tl.b1 = node_of(d.terminals[2], node_index);
              tl.b2 = node_of(d.terminals[3], node_index);
              tl.z0 = body.z0;
              tl.td = body.delay;
              size_t cap_n = static_cast<size_t>(std::ceil(body.delay / cfg.dt)) + 4;
              tl.ha.init(cap_n);
              tl.hb.init(cap_n);
              tlines.push_back(std::move(tl));
            } else if constexpr (std::is_same_v<T, Junction>) {
              // model validated upstream
            } else if constexpr (std::is_same_v<T, MutualCoupling>) {
            }
          },
          d.body);
    }

    // Junctions after all models known; resolve against the netlist's models.
    for (const auto& d : flat.devices) {
      if (const auto* j = std::get_if<Junction>(&d.body)) {
        const JjModel& m = flat.models.at(j->model);
        Jj w;
        w.name = d.name;
        w.n1 = node_of(d.terminals[0], node_index);
        w.n2 = node_of(d.terminals[1], node_index);
        w.ic = m.critical_current * j->area;
        w.cj = m.capacitance * j->area;
        w.gsg = j->area / m.r_subgap;
        w.gn = j->area / m.r_normal;
        w.vg = m.v_gap;
        w.blend_w = 0.05 * m.v_gap;
        w.geq = 2.0 * w.cj / cfg.dt;
        w.ej = w.ic / kTwoPiOverPhi0;  // Ic * Phi0 / 2pi
        jjs.push_back(std::move(w));
      }
    }

    nn = static_cast<int>(node_names.size());
    nl = static_cast<int>(inductors.size());
    nv = static_cast<int>(vsrcs.size());
    nt = static_cast<int>(tlines.size()) * 2;
    nj = static_cast<int>(jjs.size());
    off_l = nn;
    off_v = nn + nl;
    off_t = nn + nl + nv;
    off_phi = nn + nl + nv + nt;
    n_total = nn + nl + nv + nt + nj;

    for (int i = 0; i < nv; ++i) vsrcs[static_cast<size_t>(i)].xi = off_v + i;
    for (int i = 0; i < nj; ++i) jjs[static_cast<size_t>(i)].xphi = off_phi + i;
    for (size_t i = 0; i < tlines.size(); ++i) {
      tlines[i].xa = off_t + static_cast<int>(2 * i);
      tlines[i].xb = off_t + static_cast<int>(2 * i) + 1;
    }

    // Inductance matrix with mutual terms.
    lmat = Eigen::MatrixXd::Zero(nl, nl);
    for (const auto& ind : inductors) {
      for (const auto& d : flat.devices) {
        if (d.name == ind.name) {
          lmat(ind.li, ind.li) = std::get<Inductor>(d.body).inductance;
        }
      }
    }
    for (const auto& d : flat.devices) {
      if (const auto* k = std::get_if<MutualCoupling>(&d.body)) {
        int a = inductor_index.at(k->first);
        int b2 = inductor_index.at(k->second);
        double m = k->k * std::sqrt(lmat(a, a) * lmat(b2, b2));
        lmat(a, b2) += m;
        lmat(b2, a) += m;
      }
    }
    if (nl > 0) {
      Eigen::LLT<Eigen::MatrixXd> llt(lmat);
      if (llt.info() != Eigen::Success)
        throw SimError(SimErrorCode::SingularTopology,
                       "inductance matrix (with mutuals) is not positive definite");
    }

    check_dc_paths();
  }

  // Every node needs a dc path to ground through R/L/V/B devices or a
  // transmission-line conductor; a node held only by capacitors or sources
  // of current has no defined dc operating point.
  void check_dc_paths() {
    UnionFind uf(static_cast<size_t>(nn) + 1);  // index nn = ground
    auto g = [&](int n) { return n < 0 ? nn : n; };
    for (const auto& r : resistors) uf.unite(g(r.n1), g(r.n2));
    for (const auto& l : inductors) uf.unite(g(l.n1), g(l.n2));
    for (const auto& v : vsrcs) uf.unite(g(v.n1), g(v.n2));
    for (const auto& j : jjs) uf.unite(g(j.n1), g(j.n2));
    for (const auto& tl : tlines) {
      uf.unite(g(tl.a1), g(tl.b1));
      uf.unite(g(tl.a2), g(tl.b2));
    }
    for (int n = 0; n < nn; ++n) {
      if (uf.find(n) != uf.find(nn))
        throw SimError(SimErrorCode::SingularTopology,
                       "node " + node_names[static_cast<size_t>(n)] + " has no dc path to ground");
    }
  }

  // --- sparse system construction -----------------------------------------

  using Triplet = Eigen::Triplet<double>;

  void add_node_pair(std::vector<Triplet>& tt, int n1, int n2, double v) {
    if (n1 >= 0) tt.emplace_back(n1, n1, v);
    if (n2 >= 0) tt.emplace_back(n2, n2, v);
    if (n1 >= 0 && n2 >= 0) {
      tt.emplace_back(n1, n2, -v);
      tt.emplace_back(n2, n1, -v);
    }
  }
  void add_at(std::vector<Triplet>& tt, int row, int col, double v) {
    if (row >= 0 && col >= 0) tt.emplace_back(row, col, v);
  }

  void finalize_system(System& sys, std::vector<Triplet>& tt,
                       const std::vector<std::array<int, 2>>& var_positions,
                       std::vector<int>& var_slots_out) {
    for (const auto& [r, c] : var_positions) {
      if (r >= 0 && c >= 0) tt.emplace_back(r, c, 0.0);
    }
    sys.a.resize(n_total, n_total);
    sys.a.setFromTriplets(tt.begin(), tt.end());
    sys.a.makeCompressed();
    sys.base.assign(sys.a.valuePtr(), sys.a.valuePtr() + sys.a.nonZeros());
    var_slots_out.clear();
    for (const auto& [r, c] : var_positions) {
      var_slots_out.push_back(r >= 0 && c >= 0 ? sys.find_slot(r, c) : -1);
    }
    sys.lu.analyzePattern(sys.a);
    sys.analyzed = true;
  }

  std::vector<int> var_slots_flat_trans, var_slots_flat_stat;

  void collect_jj_var_positions(std::vector<std::array<int, 2>>& pos) {
    for (const auto& j : jjs) {
      pos.push_back({j.n1, j.n1});
      pos.push_back({j.n1, j.n2});
      pos.push_back({j.n2, j.n1});
      pos.push_back({j.n2, j.n2});
      pos.push_back({j.n1, j.xphi});
      pos.push_back({j.n2, j.xphi});
    }
  }

  void build_transient_system() {
    std::vector<Triplet> tt;
    for (const auto& r : resistors) add_node_pair(tt, r.n1, r.n2, r.g);
    for (const auto& c : caps) add_node_pair(tt, c.n1, c.n2, c.geq);
    for (const auto& j : jjs) add_node_pair(tt, j.n1, j.n2, j.geq);

    for (const auto& ind : inductors) {
      int row = off_l + ind.li;
      for (int k = 0; k < nl; ++k) {
        double lv = lmat(ind.li, k);
        if (lv != 0.0) add_at(tt, row, off_l + k, lv / cfg.dt);
      }
      add_at(tt, row, ind.n1, -0.5);
      add_at(tt, row, ind.n2, 0.5);
      add_at(tt, ind.n1, row, 1.0);
      add_at(tt, ind.n2, row, -1.0);
    }
    for (const auto& v : vsrcs) {
      add_at(tt, v.xi, v.n1, 1.0);
      add_at(tt, v.xi, v.n2, -1.0);
      add_at(tt, v.n1, v.xi, 1.0);
      add_at(tt, v.n2, v.xi, -1.0);
    }
    for (const auto& tl : tlines) {
      add_at(tt, tl.xa, tl.a1, 1.0);
      add_at(tt, tl.xa, tl.a2, -1.0);
      add_at(tt, tl.xa, tl.xa, -tl.z0);
      add_at(tt, tl.a1, tl.xa, 1.0);
      add_at(tt, tl.a2, tl.xa, -1.0);
      add_at(tt, tl.xb, tl.b1, 1.0);
      add_at(tt, tl.xb, tl.b2, -1.0);
      add_at(tt, tl.xb, tl.xb, -tl.z0);
      add_at(tt, tl.b1, tl.xb, 1.0);
      add_at(tt, tl.b2, tl.xb, -1.0);
    }
    for (const auto& j : jjs) {
      add_at(tt, j.xphi, j.xphi, 1.0);
      add_at(tt, j.xphi, j.n1, -gamma);
      add_at(tt, j.xphi, j.n2, gamma);
    }

    std::vector<std::array<int, 2>> var_pos;
    collect_jj_var_positions(var_pos);
    finalize_system(trans, tt, var_pos, var_slots_flat_trans);
    bind_jj_slots(var_slots_flat_trans, jj_slots_trans);
  }

  void build_static_system() {
    std::vector<Triplet> tt;
    for (const auto& r : resistors) add_node_pair(tt, r.n1, r.n2, r.g);

    for (const auto& ind : inductors) {
      int row = off_l + ind.li;
      add_at(tt, row, ind.n1, 1.0);
      add_at(tt, row, ind.n2, -1.0);
      add_at(tt, ind.n1, row, 1.0);
      add_at(tt, ind.n2, row, -1.0);
      if (ind.n1 < 0 && ind.n2 < 0) add_at(tt, row, row, 1.0);
    }
    for (const auto& v : vsrcs) {
      add_at(tt, v.xi, v.n1, 1.0);
      add_at(tt, v.xi, v.n2, -1.0);
      add_at(tt, v.n1, v.xi, 1.0);
      add_at(tt, v.n2, v.xi, -1.0);
    }
    for (const auto& tl : tlines) {
      // dc behavior of a lossless line: a straight-through conductor pair
      add_at(tt, tl.xa, tl.a1, 1.0);
      add_at(tt, tl.xa, tl.a2, -1.0);
      add_at(tt, tl.xa, tl.b1, -1.0);
      add_at(tt, tl.xa, tl.b2, 1.0);
      add_at(tt, tl.xa, tl.xa, -tl.z0);
      add_at(tt, tl.xa, tl.xb, -tl.z0);
      add_at(tt, tl.xb, tl.b1, 1.0);
      add_at(tt, tl.xb, tl.b2, -1.0);
      add_at(tt, tl.xb, tl.a1, -1.0);
      add_at(tt, tl.xb, tl.a2, 1.0);
      add_at(tt, tl.xb, tl.xb, -tl.z0);
      add_at(tt, tl.xb, tl.xa, -tl.z0);
      add_at(tt, tl.a1, tl.xa, 1.0);
      add_at(tt, tl.a2, tl.xa, -1.0);
      add_at(tt, tl.b1, tl.xb, 1.0);
      add_at(tt, tl.b2, tl.xb, -1.0);
    }
    for (const auto& j : jjs) {
      // superconducting at dc: junction voltage pinned to zero
      add_at(tt, j.xphi, j.n1, 1.0);
      add_at(tt, j.xphi, j.n2, -1.0);
      if (j.n1 < 0 && j.n2 < 0) add_at(tt, j.xphi, j.xphi, 1.0);
    }

    std::vector<std::array<int, 2>> var_pos;
    collect_jj_var_positions(var_pos);
    finalize_system(stat, tt, var_pos, var_slots_flat_stat);
    bind_jj_slots(var_slots_flat_stat, jj_slots_stat);
    stat_built = true;
  }

  void bind_jj_slots(const std::vector<int>& flat, std::vector<JjSlots>& out) {
    out.assign(jjs.size(), JjSlots{});
    for (size_t i = 0; i < jjs.size(); ++i) {
      const int* s = flat.data() + 6 * i;
      out[i] = JjSlots{s[0], s[1], s[2], s[3], s[4], s[5]};
    }
  }

  // --- junction characteristics --------------------------------------------

  // Resistive channel: subgap below the gap, normal above, smooth blend.
  static void jj_resistive(const Jj& j, double vd, double& i, double& didv) {
    double av = std::fabs(vd);
    double lo = j.vg - j.blend_w, hi = j.vg + j.blend_w;
    double g, dgdav;
    if (av <= lo) {
      g = j.gsg;
      dgdav = 0.0;
    } else if (av >= hi) {
      g = j.gn;
      dgdav = 0.0;
    } else {
      double s = (av - lo) / (hi - lo);
      double h = s * s * (3.0 - 2.0 * s);
      g = j.gsg + (j.gn - j.gsg) * h;
      dgdav = (j.gn - j.gsg) * 6.0 * s * (1.0 - s) / (hi - lo);
    }
    i = g * vd;
    didv = g + av * dgdav;
  }

  double vd_of(const Eigen::VectorXd& xx, int n1, int n2) const {
    double v1 = n1 >= 0 ? xx[n1] : 0.0;
    double v2 = n2 >= 0 ? xx[n2] : 0.0;
    return v1 - v2;
  }

  // --- transient step -------------------------------------------------------

  void assemble_rhs_transient(double t_new) {
    b.setZero();
    for (const auto& s : isrcs) {
      double iv = eval_waveform(s.wave, t_new);
      if (s.n1 >= 0) b[s.n1] -= iv;
      if (s.n2 >= 0) b[s.n2] += iv;
    }
    for (const auto& c : caps) {
      double hist = c.geq * c.vd + c.ic;
      if (c.n1 >= 0) b[c.n1] += hist;
      if (c.n2 >= 0) b[c.n2] -= hist;
    }
    for (const auto& j : jjs) {
      double hist = j.geq * j.vd + j.icap;
      if (j.n1 >= 0) b[j.n1] += hist;
      if (j.n2 >= 0) b[j.n2] -= hist;
    }
    for (const auto& ind : inductors) {
      double acc = 0.0;
      for (int k = 0; k < nl; ++k) acc += lmat(ind.li, k) * il_old[k];
      b[off_l + ind.li] = acc / cfg.dt + 0.5 * vl_old[ind.li];
    }
    for (const auto& v : vsrcs) b[v.xi] = eval_waveform(v.wave, t_new);
    for (const auto& tl : tlines) {
      b[tl.xa] = incident(tl, tl.hb, t_new);
      b[tl.xb] = incident(tl, tl.ha, t_new);
    }
    for (const auto& j : jjs) b[j.xphi] = j.phi + gamma * j.vd;
  }

  // Far-end incident sum s = v + z0*i evaluated at t_new - td from history.
  // The newest history sample sits at the current accepted time t.
  double incident(const Tline& tl, const Ring& far, double t_new) const {
    double back_steps = (t - (t_new - tl.td)) / cfg.dt;
    if (back_steps < 0.0) back_steps = 0.0;
    size_t k0 = static_cast<size_t>(back_steps);
    double frac = back_steps - static_cast<double>(k0);
    return far.back(k0) * (1.0 - frac) + far.back(k0 + 1) * frac;
  }

  // Adds the nonlinear junction currents to f (already holding A*x - b).
  void add_nonlinear(const Eigen::VectorXd& xx) {
    for (const auto& j : jjs) {
      double vd = vd_of(xx, j.n1, j.n2);
      double ir, didv;
      jj_resistive(j, vd, ir, didv);
      double is = j.ic * std::sin(xx[j.xphi]);
      double itot = is + ir;
      if (j.n1 >= 0) f[j.n1] += itot;
      if (j.n2 >= 0) f[j.n2] -= itot;
    }
  }

  void load_jacobian(System& sys, const std::vector<JjSlots>& slots,
                     const Eigen::VectorXd& xx) {
    std::copy(sys.base.begin(), sys.base.end(), sys.a.valuePtr());
    double* vals = sys.a.valuePtr();
    for (size_t i = 0; i < jjs.size(); ++i) {
      const Jj& j = jjs[i];
      double vd = vd_of(xx, j.n1, j.n2);
      double ir, didv;
      jj_resistive(j, vd, ir, didv);
      double ds = j.ic * std::cos(xx[j.xphi]);
      const JjSlots& s = slots[i];
      if (s.g11 >= 0) vals[s.g11] += didv;
      if (s.g12 >= 0) vals[s.g12] -= didv;
      if (s.g21 >= 0) vals[s.g21] -= didv;
      if (s.g22 >= 0) vals[s.g22] += didv;
      if (s.s1 >= 0) vals[s.s1] += ds;
      if (s.s2 >= 0) vals[s.s2] -= ds;
    }
  }

  // Newton solve of sys at fixed rhs b; xx in/out. Returns iterations used.
  int newton(System& sys, const std::vector<JjSlots>& slots, Eigen::VectorXd& xx, double t_err) {
    bool first_factor_checked = false;
    for (int it = 1; it <= cfg.max_newton_iters; ++it) {
      residual(sys, xx);
      add_nonlinear(xx);
      f -= b;

      if (!f.allFinite())
        throw SimError(SimErrorCode::NewtonDivergence, "non-finite residual", t_err, it);

      bool res_ok = residual_ok();
      load_jacobian(sys, slots, xx);
      sys.lu.factorize(sys.a);
      if (sys.lu.info() != Eigen::Success) {
        if (!first_factor_checked && t <= 0.0)
          throw SimError(SimErrorCode::SingularTopology, "singular system matrix");
        throw SimError(SimErrorCode::NewtonDivergence, "singular Jacobian", t_err, it);
      }
      first_factor_checked = true;
      dx = sys.lu.solve(-f);
      if (!dx.allFinite())
        throw SimError(SimErrorCode::NewtonDivergence, "non-finite update", t_err, it);

      // Keep phase moves inside one well-to-well hop per iteration.
      double max_dphi = 0.0;
      for (const auto& j : jjs) max_dphi = std::max(max_dphi, std::fabs(dx[j.xphi]));
      if (max_dphi > 1.5) dx *= 1.5 / max_dphi;

      xx += dx;

      bool upd_ok = update_ok(xx);
      if (res_ok && upd_ok) return it;
    }
    throw SimError(SimErrorCode::NewtonDivergence, "no convergence", t_err,
                   cfg.max_newton_iters);
  }

  // f = A_base * xx (linear part only, using base values).
  void residual(System& sys, const Eigen::VectorXd& xx) {
    f.setZero();
    const int* outer = sys.a.outerIndexPtr();
    const int* inner = sys.a.innerIndexPtr();
    for (int col = 0; col < n_total; ++col) {
      double xv = xx[col];
      if (xv == 0.0) continue;
      for (int k = outer[col]; k < outer[col + 1]; ++k) {
        f[inner[k]] += sys.base[static_cast<size_t>(k)] * xv;
      }
    }
  }

  bool residual_ok() const {
    for (int i = 0; i < nn; ++i) {
      if (std::fabs(f[i]) > cfg.newton_abs_tol_i) return false;
    }
    for (int i = off_l; i < off_phi; ++i) {
      if (std::fabs(f[i]) > cfg.newton_abs_tol_v) return false;
    }
    double phase_tol = kTwoPiOverPhi0 * cfg.dt * cfg.newton_abs_tol_v;
    for (int i = off_phi; i < n_total; ++i) {
      if (std::fabs(f[i]) > phase_tol) return false;
    }
    return true;
  }

  bool update_ok(const Eigen::VectorXd& xx) const {
    for (int i = 0; i < n_total; ++i) {
      double abs_floor;
      if (i < nn) {
        abs_floor = cfg.newton_abs_tol_v;
      } else if (i < off_phi) {
        abs_floor = cfg.newton_abs_tol_i;
      } else {
        abs_floor = 1e-9;  // radians
      }
      if (std::fabs(dx[i]) > cfg.newton_rel_tol * std::fabs(xx[i]) + abs_floor) return false;
    }
    return true;
  }

  void step() {
    double t_new = t + cfg.dt;
    assemble_rhs_transient(t_new);
    x_new = x;
    newton(trans, jj_slots_trans, x_new, t_new);
    accept(t_new);
  }

  void solve_operating_point() {
    if (!stat_built) build_static_system();
    b.setZero();
    for (const auto& s : isrcs) {
      double iv = eval_waveform(s.wave, t);
      if (s.n1 >= 0) b[s.n1] -= iv;
      if (s.n2 >= 0) b[s.n2] += iv;
    }
    for (const auto& v : vsrcs) b[v.xi] = eval_waveform(v.wave, t);
    x_new = x;
    newton(stat, jj_slots_stat, x_new, t);
    x = x_new;
    // Synchronize device accepted state with the operating point.
    for (auto& c : caps) {
      c.vd = vd_of(x, c.n1, c.n2);
      c.ic = 0.0;
    }
    for (auto& j : jjs) {
      j.vd = vd_of(x, j.n1, j.n2);
      j.icap = 0.0;
      j.phi = x[j.xphi];
    }
    for (const auto& ind : inductors) {
      il_old[ind.li] = x[off_l + ind.li];
      vl_old[ind.li] = vd_of(x, ind.n1, ind.n2);
    }
    e_init_stored = stored_energy();
  }

  void accept(double t_new) {
    // Trapezoidal averages need both endpoints; energy integrals accumulate here.
    for (auto& r : resistors) {
      double vd = vd_of(x_new, r.n1, r.n2);
      double p = r.g * vd * vd;
      r.e_diss += 0.5 * cfg.dt * (r.p_prev + p);
      r.p_prev = p;
    }
    for (auto& c : caps) {
      double vd = vd_of(x_new, c.n1, c.n2);
      c.ic = c.geq * (vd - c.vd) - c.ic;
      c.vd = vd;
    }
    for (auto& j : jjs) {
      double vd = vd_of(x_new, j.n1, j.n2);
      double ir, didv;
      jj_resistive(j, vd, ir, didv);
      double p = ir * vd;
      j.e_diss += 0.5 * cfg.dt * (j.p_prev + p);
      j.p_prev = p;
      j.icap = j.geq * (vd - j.vd) - j.icap;
      j.vd = vd;
      j.phi = x_new[j.xphi];
    }
    for (auto& v : vsrcs) {
      double vd = vd_of(x_new, v.n1, v.n2);
      double p = -vd * x_new[v.xi];  // delivered
      v.e_in += 0.5 * cfg.dt * (v.p_prev + p);
      v.p_prev = p;
    }
    for (auto& s : isrcs) {
      double vd = vd_of(x_new, s.n1, s.n2);
      double p = -vd * eval_waveform(s.wave, t_new);
      s.e_in += 0.5 * cfg.dt * (s.p_prev + p);
      s.p_prev = p;
    }
    for (const auto& ind : inductors) {
      il_old[ind.li] = x_new[off_l + ind.li];
      vl_old[ind.li] = vd_of(x_new, ind.n1, ind.n2);
    }
    for (auto& tl : tlines) {
      tl.ha.push(vd_of(x_new, tl.a1, tl.a2) + tl.z0 * x_new[tl.xa]);
      tl.hb.push(vd_of(x_new, tl.b1, tl.b2) + tl.z0 * x_new[tl.xb]);
    }
    x = x_new;
    t = t_new;
  }

  // Initial history sample so interpolation sees the t=0 state.
  void push_initial_history() {
    for (auto& tl : tlines) {
      tl.ha.push(vd_of(x, tl.a1, tl.a2) + tl.z0 * x[tl.xa]);
      tl.hb.push(vd_of(x, tl.b1, tl.b2) + tl.z0 * x[tl.xb]);
    }
  }

  // --- energy --------------------------------------------------------------

  double stored_energy() const {
    double e = 0.0;
    if (nl > 0) {
      Eigen::VectorXd il = x.segment(off_l, nl);
      e += 0.5 * il.dot(lmat * il);
    }
    for (const auto& c : caps) e += 0.5 * c.c * c.vd * c.vd;
    for (const auto& j : jjs) {
      e += 0.5 * j.cj * j.vd * j.vd;
      e += j.ej * (1.0 - std::cos(j.phi));
    }
    return e;
  }

  double tl_energy() const {
    double e = 0.0;
    for (const auto& tl : tlines) {
      e += line_wave_energy(tl, tl.ha) + line_wave_energy(tl, tl.hb);
    }
    return e;
  }

  // Integral of s^2/(4 z0) over the trailing td window of one history.
  double line_wave_energy(const Tline& tl, const Ring& h) const {
    double span = tl.td;
    size_t full = static_cast<size_t>(span / cfg.dt);
    double e = 0.0;
    auto seg = [&](double s0, double s1, double w) {
      return w / 3.0 * (s0 * s0 + s0 * s1 + s1 * s1);
    };
    for (size_t k = 0; k < full; ++k) e += seg(h.back(k), h.back(k + 1), cfg.dt);
    double rem = span - static_cast<double>(full) * cfg.dt;
    if (rem > 0.0) {
      double frac = rem / cfg.dt;
      double s_far = h.back(full) * (1.0 - frac) + h.back(full + 1) * frac;
      e += seg(h.back(full), s_far, rem);
    }
    return e / (4.0 * tl.z0);
  }

  EnergyAudit audit() const {
    EnergyAudit a;
    for (const auto& r : resistors) a.dissipated += r.e_diss;
    for (const auto& j : jjs) a.dissipated += j.e_diss;
    for (const auto& v : vsrcs) a.source_input += v.e_in;
    for (const auto& s : isrcs) a.source_input += s.e_in;
    a.stored = stored_energy();
    a.tl_in_flight = tl_energy();
    a.initial_stored = e_init_stored;
    return a;
  }

  // --- probes ---------------------------------------------------------------

  enum class Target { Node, R, C, L, V, I, T, B };
  struct Resolved {
    Target target;
    int index;
  };

  Resolved resolve(const std::string& name, bool node) const {
    if (node) {
      if (name == "0") return {Target::Node, -1};
      auto it = node_index.find(name);
      if (it == node_index.end())
        throw SimError(SimErrorCode::ProbeMissing, "node " + name);
      return {Target::Node, it->second};
    }
    for (size_t i = 0; i < resistors.size(); ++i)
      if (resistors[i].name == name) return {Target::R, static_cast<int>(i)};
    for (size_t i = 0; i < caps.size(); ++i)
      if (caps[i].name == name) return {Target::C, static_cast<int>(i)};
    for (size_t i = 0; i < inductors.size(); ++i)
      if (inductors[i].name == name) return {Target::L, static_cast<int>(i)};
    for (size_t i = 0; i < vsrcs.size(); ++i)
      if (vsrcs[i].name == name) return {Target::V, static_cast<int>(i)};
    for (size_t i = 0; i < isrcs.size(); ++i)
      if (isrcs[i].name == name) return {Target::I, static_cast<int>(i)};
    for (size_t i = 0; i < tlines.size(); ++i)
      if (tlines[i].name == name) return {Target::T, static_cast<int>(i)};
    for (size_t i = 0; i < jjs.size(); ++i)
      if (jjs[i].name == name) return {Target::B, static_cast<int>(i)};
    throw SimError(SimErrorCode::ProbeMissing, "device " + name);
  }

  double probe_value(const Probe& p) const {
    return std::visit(
        [&](const auto& q) -> double {
          using T = std::decay_t<decltype(q)>;
          if constexpr (std::is_same_v<T, NodeVoltageProbe>) {
            auto r = resolve(q.node, true);
            return r.index < 0 ? 0.0 : x[r.index];
          } else if constexpr (std::is_same_v<T, BranchCurrentProbe>) {
            auto r = resolve(q.device, false);
            switch (r.target) {
              case Target::L: return x[off_l + inductors[static_cast<size_t>(r.index)].li];
              case Target::V: return x[vsrcs[static_cast<size_t>(r.index)].xi];
              case Target::T: return x[tlines[static_cast<size_t>(r.index)].xa];
              case Target::R: {
                const auto& d = resistors[static_cast<size_t>(r.index)];
                return d.g * vd_of(x, d.n1, d.n2);
              }
              case Target::C: return caps[static_cast<size_t>(r.index)].ic;
              case Target::I: return eval_waveform(isrcs[static_cast<size_t>(r.index)].wave, t);
              case Target::B: {
                const auto& j = jjs[static_cast<size_t>(r.index)];
                double ir, didv;
                jj_resistive(j, j.vd, ir, didv);
                return j.ic * std::sin(j.phi) + ir + j.icap;
              }
              default: throw SimError(SimErrorCode::ProbeMissing, q.device);
            }
          } else if constexpr (std::is_same_v<T, JunctionPhaseProbe>) {
            auto r = resolve(q.device, false);
            if (r.target != Target::B)
              throw SimError(SimErrorCode::ProbeMissing, q.device + " is not a junction");
            return jjs[static_cast<size_t>(r.index)].phi;
          } else {
            auto r = resolve(q.device, false);
            switch (r.target) {
              case Target::R: {
                const auto& d = resistors[static_cast<size_t>(r.index)];
                double vd = vd_of(x, d.n1, d.n2);
                return d.g * vd * vd;
              }
              case Target::C: {
                const auto& d = caps[static_cast<size_t>(r.index)];
                return vd_of(x, d.n1, d.n2) * d.ic;
              }
              case Target::L: {
                const auto& d = inductors[static_cast<size_t>(r.index)];
                return vd_of(x, d.n1, d.n2) * x[off_l + d.li];
              }
              case Target::V: {
                const auto& d = vsrcs[static_cast<size_t>(r.index)];
                return vd_of(x, d.n1, d.n2) * x[d.xi];
              }
              case Target::I: {
                const auto& d = isrcs[static_cast<size_t>(r.index)];
                return vd_of(x, d.n1, d.n2) * eval_waveform(d.wave, t);
              }
              case Target::T: {
                const auto& d = tlines[static_cast<size_t>(r.index)];
                return vd_of(x, d.a1, d.a2) * x[d.xa] + vd_of(x, d.b1, d.b2) * x[d.xb];
              }
              case Target::B: {
                const auto& j = jjs[static_cast<size_t>(r.index)];
                double ir, didv;
                jj_resistive(j, j.vd, ir, didv);
                double itot = j.ic * std::sin(j.phi) + ir + j.icap;
                return j.vd * itot;
              }
            }
            throw SimError(SimErrorCode::ProbeMissing, q.device);
          }
        },
        p);
  }

  SystemState snapshot() const {
    SystemState s;
    s.time = t;
    for (int i = 0; i < nn; ++i)
      s.node_voltages[node_names[static_cast<size_t>(i)]] = x[i];
    for (const auto& ind : inductors) s.branch_currents[ind.name] = x[off_l + ind.li];
    for (const auto& v : vsrcs) s.branch_currents[v.name] = x[v.xi];
    for (const auto& tl : tlines) {
      s.branch_currents[tl.name + ".a"] = x[tl.xa];
      s.branch_currents[tl.name + ".b"] = x[tl.xb];
    }
    for (const auto& j : jjs) {
      s.junction_phases[j.name] = j.phi;
      s.junction_voltages[j.name] = j.vd;
    }
    return s;
  }
};

// ---------------------------------------------------------------------------
// Simulator facade
// ---------------------------------------------------------------------------

Simulator::Simulator(const Netlist& flat, const SimConfig& config)
    : impl_(std::make_unique<SimulatorImpl>(flat, config)) {
  impl_->push_initial_history();
}
Simulator::~Simulator() = default;
Simulator::Simulator(Simulator&&) noexcept = default;
Simulator& Simulator::operator=(Simulator&&) noexcept = default;

size_t Simulator::unknown_count() const { return static_cast<size_t>(impl_->n_total); }
double Simulator::time() const { return impl_->t; }
void Simulator::step() { impl_->step(); }
void Simulator::solve_operating_point() { impl_->solve_operating_point(); }
SystemState Simulator::state() const { return impl_->snapshot(); }
EnergyAudit Simulator::energy_audit() const { return impl_->audit(); }
double Simulator::probe_value(const Probe& p) const { return impl_->probe_value(p); }
void Simulator::check_probe(const Probe& p) const { (void)impl_->probe_value(p); }

// ---------------------------------------------------------------------------
// run_transient / energy_accounting
// ---------------------------------------------------------------------------

RunResult run_transient(const Netlist& netlist, const SimConfig& config,
                        const std::vector<Probe>& probes) {
  Netlist flat = flatten(netlist);
  if (config.t_stop < 0)
    throw SimError(SimErrorCode::InvalidConfig, "t_stop must be >= 0");

  Simulator sim(flat, config);
  for (const auto& p : probes) sim.check_probe(p);

  std::vector<std::string> labels;
  labels.reserve(probes.size());
  for (const auto& p : probes) labels.push_back(probe_label(p));

  RunResult result;
  result.waveform = Waveform(config.dt, 0.0, labels);

  auto record = [&] {
    std::vector<double> row(probes.size());
    for (size_t i = 0; i < probes.size(); ++i) row[i] = sim.probe_value(probes[i]);
    result.waveform.append_sample(row);
  };

  size_t steps = static_cast<size_t>(std::floor(config.t_stop / config.dt + 1e-9));
  if (steps == 0) {
    sim.solve_operating_point();
    record();
    result.audit = sim.energy_audit();
    return result;
  }

  record();
  for (size_t k = 0; k < steps; ++k) {
    try {
      sim.step();
    } catch (const SimError& e) {
      if (e.code() == SimErrorCode::NewtonDivergence) {
        result.converged = false;
        result.error = e.what();
        result.fail_time = e.time();
        result.fail_iterations = e.iterations();
        result.audit = sim.energy_audit();
        return result;
      }
      throw;
    }
    record();
  }
  result.audit = sim.energy_audit();
  return result;
}

EnergyReport energy_accounting(const Waveform& w, double t_begin, double t_end) {
  if (w.samples() == 0) throw SimError(SimErrorCode::WindowOutsideRun, "empty waveform");
  double t0 = w.start_time();
  double t1 = w.time(w.samples() - 1);
  if (t_begin < t0 - 1e-15 || t_end > t1 + 1e-15 || t_begin >= t_end)
    throw SimError(SimErrorCode::WindowOutsideRun,
                   "window [" + format_quantity(t_begin) + ", " + format_quantity(t_end) +
                       "] outside run [" + format_quantity(t0) + ", " + format_quantity(t1) +
                       "]");

  EnergyReport report;
  for (const auto& label : w.labels()) {
    if (label.rfind("P(", 0) != 0) continue;
    std::string device = label.substr(2, label.size() - 3);
    const auto& col = w.column(label);
    // Trapezoid over the sample grid, with linear-interpolated partial ends.
    double e = 0.0;
    double dt = w.dt();
    auto value = [&](double tq) {
      double f = (tq - t0) / dt;
      if (f <= 0) return col.front();
      if (f >= static_cast<double>(col.size() - 1)) return col.back();
      size_t i = static_cast<size_t>(f);
      double u = f - static_cast<double>(i);
      return col[i] * (1 - u) + col[i + 1] * u;
    };
    size_t i_begin = static_cast<size_t>(std::ceil((t_begin - t0) / dt - 1e-9));
    size_t i_end = static_cast<size_t>(std::floor((t_end - t0) / dt + 1e-9));
    double tb = t0 + static_cast<double>(i_begin) * dt;
    double te = t0 + static_cast<double>(i_end) * dt;
    if (tb > t_begin) e += 0.5 * (value(t_begin) + col[i_begin]) * (tb - t_begin);
    for (size_t i = i_begin; i + 1 <= i_end; ++i)
      e += 0.5 * (col[i] + col[i + 1]) * dt;
    if (t_end > te) e += 0.5 * (col[i_end] + value(t_end)) * (t_end - te);
    report.per_device[device] = e;
    report.total += e;
  }
  return report;
}

}  // namespace qfp
