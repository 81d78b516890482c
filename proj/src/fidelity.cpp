#include "lpgate/fidelity.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "lpgate/constants.hpp"
#include "lpgate/errors.hpp"

namespace lpgate {

double analytic_infidelity(const DriveParams& p, double omega_I, double n_c, double nbar,
                           int blocks) {
  if (blocks != 1 && blocks != 2) throw ConfigError("blocks must be 1 or 2");
  const double wt = omega_I * p.tau;
  const double x = p.eta * p.rabi * p.tau;
  return blocks * wt * x * x * std::pow(2.0 * n_c * wt, 7) * (2.0 * nbar + 1.0);
}

double higher_order_ld_infidelity(double eta, double nbar) {
  const double h = nbar + 0.5;
  return 0.5 * kPi * kPi * std::pow(eta, 4) * h * h;
}

void ThermalSpec::validate() const {
  if (!(nbar >= 0.0) || !std::isfinite(nbar)) throw ConfigError("nbar must be >= 0");
  if (!(weight_cutoff > 0.0 && weight_cutoff <= 1.0))
    throw ConfigError("thermal weight cutoff must lie in (0, 1]");
}

std::vector<FockConfig> thermal_ensemble(const ThermalSpec& thermal, int modes, int max_level) {
  thermal.validate();
  if (modes < 1) throw ConfigError("thermal ensemble needs at least one mode");
  const double nb = thermal.nbar;
  if (nb > 0.0 && thermal.weight_cutoff >= 1.0)
    throw ConfigError("a thermal state needs a weight cutoff below 1");
  auto p1 = [&](int n) {
    if (nb == 0.0) return n == 0 ? 1.0 : 0.0;
    return std::pow(nb / (nb + 1.0), n) / (nb + 1.0);
  };
  auto prob = [&](const std::vector<int>& n) {
    double p = 1.0;
    for (int k : n) p *= p1(k);
    return p;
  };
  struct Entry {
    double p;
    std::vector<int> n;
  };
  auto worse = [](const Entry& a, const Entry& b) {
    if (a.p != b.p) return a.p < b.p;
    return a.n > b.n;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> queue(worse);
  std::set<std::vector<int>> seen;
  std::vector<int> zero(modes, 0);
  queue.push({prob(zero), zero});
  seen.insert(zero);

  std::vector<FockConfig> out;
  double total = 0.0;
  while (!queue.empty()) {
    const Entry top = queue.top();
    // Stop once the cutoff is reached, but never split a class of equal probability.
    if (total >= thermal.weight_cutoff &&
        (top.p <= 0.0 || std::abs(top.p - out.back().weight) > 1e-12 * out.back().weight))
      break;
    if (top.p <= 0.0) break;
    queue.pop();
    out.push_back({top.n, top.p});
    total += top.p;
    for (int m = 0; m < modes; ++m) {
      if (top.n[m] + 1 >= max_level) continue;
      auto next = top.n;
      ++next[m];
      if (seen.insert(next).second) queue.push({prob(next), next});
    }
  }
  if (total < thermal.weight_cutoff * (1.0 - 1e-12)) {
    std::ostringstream msg;
    msg << "thermal truncation retains weight " << total << " < cutoff " << thermal.weight_cutoff
        << " with levels below " << max_level << "; raise fock_cutoff";
    throw ConfigError(msg.str());
  }
  return out;
}

int auto_fock_cutoff(const ThermalSpec& thermal, int modes) {
  const auto ens = thermal_ensemble(thermal, modes, 100000);
  int nmax = 0;
  for (const auto& c : ens)
    for (int k : c.n) nmax = std::max(nmax, k);
  return std::max(8, nmax + 8);
}

void SimConfig::validate() const {
  if (n_ions < 1 || n_ions > 3) throw ConfigError("simulation supports 1 to 3 ions");
  if (fock_cutoff != 0 && fock_cutoff < 4) throw ConfigError("fock_cutoff must be >= 4");
  if (!(steps_per_period >= 200.0)) throw ConfigError("steps_per_period must be >= 200");
  double norm = 0.0;
  for (const auto& c : spin_input) norm += std::norm(c);
  if (std::abs(norm - 1.0) > 1e-12) throw ConfigError("spin input state must be normalized");
}

SimModel make_sim_model(const CrystalModel& crystal, const DriveParams& drive,
                        const SimConfig& sim) {
  sim.validate();
  const int n_pos = static_cast<int>(crystal.positions.size());
  std::vector<int> ions;
  const auto [a, b] = crystal.targets;
  ions.push_back(a);
  if (sim.n_ions >= 2) {
    if (n_pos < 2 || a == b) throw ConfigError("crystal has no second target ion");
    ions.push_back(b);
  }
  if (sim.n_ions == 3) {
    const int step = b > a ? 1 : -1;
    int spectator = b + step;
    if (spectator < 0 || spectator >= n_pos) spectator = a - step;
    if (spectator < 0 || spectator >= n_pos || spectator == b)
      throw ConfigError("crystal has no neighbour to use as spectator");
    ions.push_back(spectator);
  }
  SimModel m;
  const auto n = static_cast<Eigen::Index>(ions.size());
  m.driven = std::min(sim.n_ions, 2);
  m.hopping = Eigen::MatrixXd::Zero(n, n);
  for (int i : ions) {
    m.freqs.push_back(crystal.local_freqs[i]);
    m.eta.push_back(drive.eta * std::sqrt(drive.omega / crystal.local_freqs[i]));
  }
  if (sim.include_coupling)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j)
          m.hopping(i, j) = crystal.coupling(ions[i], ions[j]) / std::sqrt(m.freqs[i] * m.freqs[j]);
  return m;
}

DriveSchedule make_interval_schedule(const DriveParams& drive, const PhaseProfile& profile) {
  profile.validate(drive.tau);
  DriveSchedule s;
  s.rabi = drive.rabi;
  s.omega = drive.omega;
  double t = 0.0;
  for (const auto& seg : profile.segments) {
    s.pieces.push_back({t, t + seg.duration, 0.0, seg.slope, seg.offset + drive.phi0});
    t += seg.duration;
  }
  s.pieces.back().t1 = drive.tau;
  return s;
}

DriveSchedule make_schedule(const GateDesign& design) {
  design.profile.validate(design.drive.tau);
  const double tau = design.drive.tau;
  DriveSchedule s;
  s.rabi = design.drive.rabi;
  s.omega = design.drive.omega;
  const auto edges = design.profile.boundaries();
  for (int j = 0; j < design.sequence.total_intervals(); ++j) {
    const double origin = j * tau;
    const double extra = design.drive.phi0 + design.sequence.interval_offset(j);
    for (std::size_t k = 0; k < design.profile.segments.size(); ++k) {
      const auto& seg = design.profile.segments[k];
      const double t1 = k + 1 == design.profile.segments.size() ? (j + 1) * tau : origin + edges[k + 1];
      s.pieces.push_back({origin + edges[k], t1, origin, seg.slope, seg.offset + extra});
    }
  }
  return s;
}

namespace {

Eigen::MatrixXd position_operator(int n) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k + 1 < n; ++k) x(k, k + 1) = x(k + 1, k) = std::sqrt(k + 1.0);
  return x;
}

Eigen::Index ipow(int base, int exp) {
  Eigen::Index r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

// Embeds a single-mode operator into the tensor product (mode 0 fastest).
template <class M>
Eigen::MatrixXcd embed(const M& op, int mode, int modes, int n) {
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Identity(1, 1);
  for (int k = modes - 1; k >= 0; --k) {
    Eigen::MatrixXcd f = k == mode ? Eigen::MatrixXcd(op.template cast<cplx>())
                                   : Eigen::MatrixXcd(Eigen::MatrixXcd::Identity(n, n));
    Eigen::MatrixXcd next(out.rows() * n, out.cols() * n);
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      for (Eigen::Index c = 0; c < out.cols(); ++c)
        next.block(r * n, c * n, n, n) = out(r, c) * f;
    out = std::move(next);
  }
  return out;
}

}  // namespace

BranchHamiltonian::BranchHamiltonian(const SimModel& model, const DriveSchedule& schedule,
                                     std::array<int, 2> signs, int cutoff)
    : model_(model), schedule_(schedule), signs_(signs), cutoff_(cutoff) {
  if (cutoff < 4) throw ConfigError("fock_cutoff must be >= 4");
  for (int s : signs)
    if (s != 1 && s != -1) throw ConfigError("branch signs must be +1 or -1");
  const Eigen::MatrixXd x = position_operator(cutoff);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(x);
  for (int i = 0; i < model.driven; ++i) {
    const Eigen::VectorXd lam = model.eta[i] * eig.eigenvalues().array();
    const Eigen::MatrixXd& v = eig.eigenvectors();
    cos_x_.push_back(v * lam.array().cos().matrix().asDiagonal() * v.transpose());
    sin_x_.push_back(v * lam.array().sin().matrix().asDiagonal() * v.transpose());
  }
}

Eigen::Index BranchHamiltonian::dimension() const { return ipow(cutoff_, modes()); }

Eigen::MatrixXcd BranchHamiltonian::lab_matrix(const SchedulePiece& piece, double t) const {
  const int n = cutoff_;
  const int m = modes();
  const Eigen::Index d = dimension();
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(d, d);
  Eigen::MatrixXd num = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) num(k, k) = k;
  const Eigen::MatrixXd x = position_operator(n);
  for (int mu = 0; mu < m; ++mu) h += model_.freqs[mu] * embed(num, mu, m, n);
  const double c = schedule_.phase(piece, t);
  for (int i = 0; i < model_.driven; ++i) {
    const Eigen::MatrixXd drive =
        2.0 * schedule_.rabi * signs_[i] * (std::cos(c) * cos_x_[i] - std::sin(c) * sin_x_[i]);
    h += embed(drive, i, m, n);
  }
  for (int mu = 0; mu < m; ++mu)
    for (int nu = mu + 1; nu < m; ++nu)
      if (model_.hopping(mu, nu) != 0.0)
        h -= model_.hopping(mu, nu) * embed(x, mu, m, n) * embed(x, nu, m, n);
  return h;
}

std::array<BranchHamiltonian, 4> build_hamiltonian_branches(const SimModel& model,
                                                            const DriveSchedule& schedule,
                                                            int cutoff) {
  return {BranchHamiltonian(model, schedule, {1, 1}, cutoff),
          BranchHamiltonian(model, schedule, {1, -1}, cutoff),
          BranchHamiltonian(model, schedule, {-1, 1}, cutoff),
          BranchHamiltonian(model, schedule, {-1, -1}, cutoff)};
}

Eigen::Index fock_index(const std::vector<int>& n, int cutoff) {
  Eigen::Index idx = 0, stride = 1;
  for (int k : n) {
    if (k < 0 || k >= cutoff) throw ConfigError("Fock level outside the cutoff");
    idx += k * stride;
    stride *= cutoff;
  }
  return idx;
}

namespace {

// Tensor-axis operations on column-stacked states of dimension n^modes.
class TensorOps {
 public:
  TensorOps(int n, int modes, Eigen::Index cols)
      : n_(n), modes_(modes), dim_(ipow(n, modes)), cols_(cols) {}

  Eigen::Index inner(int mode) const { return ipow(n_, mode); }

  // out += op (acting on `mode`) * in
  void apply_dense(int mode, const Eigen::MatrixXcd& op, const Eigen::MatrixXcd& in,
                   Eigen::MatrixXcd& out) const {
    if (mode == 0) {
      Eigen::Map<const Eigen::MatrixXcd> src(in.data(), n_, dim_ / n_ * cols_);
      Eigen::Map<Eigen::MatrixXcd> dst(out.data(), n_, dim_ / n_ * cols_);
      dst.noalias() += op * src;
      return;
    }
    const Eigen::Index in_sz = inner(mode);
    const Eigen::Index outer = dim_ / (in_sz * n_);
    const Eigen::MatrixXcd opt = op.transpose();
    for (Eigen::Index c = 0; c < cols_; ++c)
      for (Eigen::Index o = 0; o < outer; ++o) {
        const Eigen::Index base = c * dim_ + o * in_sz * n_;
        Eigen::Map<const Eigen::MatrixXcd> src(in.data() + base, in_sz, n_);
        Eigen::Map<Eigen::MatrixXcd> dst(out.data() + base, in_sz, n_);
        dst.noalias() += src * opt;
      }
  }

  // out = X_I(t) in on `mode`, with X_I = a e^{-i w t} + a^dagger e^{i w t}.
  void apply_x(int mode, cplx rot, const Eigen::MatrixXcd& in, Eigen::MatrixXcd& out) const {
    const Eigen::Index in_sz = inner(mode);
    const Eigen::Index block = in_sz * n_;
    const Eigen::Index blocks = dim_ * cols_ / block;
    const cplx rot_c = std::conj(rot);
    const cplx* src = in.data();
    cplx* dst = out.data();
    for (Eigen::Index b = 0; b < blocks; ++b) {
      const cplx* s = src + b * block;
      cplx* d = dst + b * block;
      for (int k = 0; k < n_; ++k) {
        cplx* dk = d + k * in_sz;
        const double up = std::sqrt(k + 1.0), down = std::sqrt(static_cast<double>(k));
        if (k + 1 < n_) {
          const cplx cu = rot_c * up;
          const cplx* su = s + (k + 1) * in_sz;
          if (k > 0) {
            const cplx cd = rot * down;
            const cplx* sd = s + (k - 1) * in_sz;
            for (Eigen::Index i = 0; i < in_sz; ++i) dk[i] = cu * su[i] + cd * sd[i];
          } else {
            for (Eigen::Index i = 0; i < in_sz; ++i) dk[i] = cu * su[i];
          }
        } else {
          const cplx cd = rot * down;
          const cplx* sd = s + (k - 1) * in_sz;
          for (Eigen::Index i = 0; i < in_sz; ++i) dk[i] = cd * sd[i];
        }
      }
    }
  }

  // Applies a diagonal phase exp(-i w t k) on `mode`.
  void apply_free(int mode, double wt, Eigen::MatrixXcd& psi) const {
    const Eigen::Index in_sz = inner(mode);
    const Eigen::Index block = in_sz * n_;
    const Eigen::Index blocks = dim_ * cols_ / block;
    std::vector<cplx> ph(n_);
    for (int k = 0; k < n_; ++k) ph[k] = std::polar(1.0, -wt * k);
    for (Eigen::Index b = 0; b < blocks; ++b)
      for (int k = 0; k < n_; ++k) {
        cplx* d = psi.data() + b * block + k * in_sz;
        for (Eigen::Index i = 0; i < in_sz; ++i) d[i] *= ph[k];
      }
  }

  // Population in levels >= level of `mode`, per column.
  Eigen::VectorXd upper_population(int mode, int level, const Eigen::MatrixXcd& psi) const {
    const Eigen::Index in_sz = inner(mode);
    const Eigen::Index block = in_sz * n_;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(cols_);
    for (Eigen::Index c = 0; c < cols_; ++c) {
      double acc = 0.0;
      for (Eigen::Index b = 0; b < dim_ / block; ++b)
        for (int k = level; k < n_; ++k) {
          const cplx* d = psi.data() + c * dim_ + b * block + k * in_sz;
          for (Eigen::Index i = 0; i < in_sz; ++i) acc += std::norm(d[i]);
        }
      out(c) = acc;
    }
    return out;
  }

  // <psi|a|psi> of column 0 on `mode`, without time rotation.
  cplx lowering_mean(int mode, const Eigen::MatrixXcd& psi) const {
    const Eigen::Index in_sz = inner(mode);
    const Eigen::Index block = in_sz * n_;
    cplx acc = 0.0;
    for (Eigen::Index b = 0; b < dim_ / block; ++b)
      for (int k = 0; k + 1 < n_; ++k) {
        const cplx* lo = psi.data() + b * block + k * in_sz;
        const cplx* hi = lo + in_sz;
        const double f = std::sqrt(k + 1.0);
        for (Eigen::Index i = 0; i < in_sz; ++i) acc += std::conj(lo[i]) * hi[i] * f;
      }
    return acc;
  }

 private:
  int n_;
  int modes_;
  Eigen::Index dim_;
  Eigen::Index cols_;
};

// Classical amplitudes (rotating frame), quantum state (interaction picture) and the
// accumulated c-number phase of the displaced frame.
struct FrameState {
  Eigen::VectorXcd beta;
  Eigen::MatrixXcd psi;
  double phase = 0.0;
};

class FrameRhs {
 public:
  FrameRhs(const BranchHamiltonian& h, const TensorOps& ops)
      : h_(h), ops_(ops), n_(h.cutoff()), modes_(h.modes()), driven_(h.model().driven) {
    const Eigen::MatrixXd x = position_operator(n_);
    for (int i = 0; i < driven_; ++i) {
      cres_.push_back(h.cos_x(i) - Eigen::MatrixXd::Identity(n_, n_));
      sres_.push_back(h.sin_x(i) - h.model().eta[i] * x);
    }
    for (int mu = 0; mu < modes_; ++mu)
      for (int nu = mu + 1; nu < modes_; ++nu)
        if (h.model().hopping(mu, nu) != 0.0) pairs_.push_back({mu, nu});
    u_.resize(n_);
    op_.resize(n_, n_);
  }

  // d/dt of the frame state at time t inside `piece`.
  void operator()(const SchedulePiece& piece, double t, const FrameState& y, FrameState& dy) {
    const auto& m = h_.model();
    const auto& sched = h_.schedule();
    const double rabi = sched.rabi;
    const double c = sched.phase(piece, t);
    const cplx I(0.0, 1.0);

    std::vector<double> xi(modes_, 0.0);
    std::vector<double> re(modes_, 0.0);
    dy.phase = 0.0;
    dy.beta.resize(driven_);
    for (int i = 0; i < driven_; ++i) {
      const cplx rot = std::polar(1.0, m.freqs[i] * t);
      const cplx alpha = y.beta(i) * std::conj(rot);
      re[i] = alpha.real();
      xi[i] = 2.0 * alpha.real();
      const double theta = m.eta[i] * xi[i] + c;
      const double s = h_.signs()[i];
      const double f = 2.0 * m.eta[i] * rabi * s * std::sin(theta);
      dy.beta(i) = rot * I * f;
      dy.phase += f * re[i] + 2.0 * rabi * s * (std::cos(theta) - std::cos(c));
    }

    if (dy.psi.rows() != y.psi.rows() || dy.psi.cols() != y.psi.cols())
      dy.psi.resize(y.psi.rows(), y.psi.cols());
    dy.psi.setZero();
    for (int i = 0; i < driven_; ++i) {
      const double theta = m.eta[i] * xi[i] + c;
      const double amp = 2.0 * rabi * h_.signs()[i];
      const Eigen::MatrixXd a = amp * (std::cos(theta) * cres_[i] - std::sin(theta) * sres_[i]);
      // -i * A_nm * exp(i w t (n - m))
      for (int k = 0; k < n_; ++k) u_[k] = std::polar(1.0, m.freqs[i] * t * k);
      for (int col = 0; col < n_; ++col) {
        const cplx right = -I * std::conj(u_[col]);
        for (int row = 0; row < n_; ++row) op_(row, col) = a(row, col) * u_[row] * right;
      }
      ops_.apply_dense(i, op_, y.psi, dy.psi);
    }
    tmp_y_.resize(y.psi.rows(), y.psi.cols());
    xx_.resize(y.psi.rows(), y.psi.cols());
    for (auto [mu, nu] : pairs_) {
      const double g = m.hopping(mu, nu);
      dy.phase -= g * xi[mu] * xi[nu];
      // +i g [X_mu (X_nu psi + xi_nu psi) + xi_mu X_nu psi]
      ops_.apply_x(nu, std::polar(1.0, m.freqs[nu] * t), y.psi, tmp_y_);
      tmp_x_ = tmp_y_ + xi[nu] * y.psi;
      ops_.apply_x(mu, std::polar(1.0, m.freqs[mu] * t), tmp_x_, xx_);
      dy.psi += (I * g) * (xx_ + xi[mu] * tmp_y_);
    }
  }

 private:
  const BranchHamiltonian& h_;
  const TensorOps& ops_;
  int n_, modes_, driven_;
  std::vector<Eigen::MatrixXd> cres_, sres_;
  std::vector<std::pair<int, int>> pairs_;
  Eigen::MatrixXcd tmp_x_, tmp_y_, xx_, op_;
  std::vector<cplx> u_;
};

void axpy(FrameState& out, const FrameState& y, double h, const FrameState& k) {
  out.beta = y.beta + h * k.beta;
  out.psi = y.psi + h * k.psi;
  out.phase = y.phase + h * k.phase;
}

Eigen::MatrixXcd displacement(cplx alpha, int n) {
  // D = exp(-i G) with Hermitian G = i (alpha a^dagger - alpha* a).
  Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(n, n);
  const cplx I(0.0, 1.0);
  for (int k = 0; k + 1 < n; ++k) {
    const double s = std::sqrt(k + 1.0);
    g(k + 1, k) = I * alpha * s;
    g(k, k + 1) = -I * std::conj(alpha) * s;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(g);
  Eigen::VectorXcd ph(n);
  for (int k = 0; k < n; ++k) ph(k) = std::polar(1.0, -eig.eigenvalues()(k));
  return eig.eigenvectors() * ph.asDiagonal() * eig.eigenvectors().adjoint();
}

}  // namespace

BranchEvolution evolve_branch(const BranchHamiltonian& h, const Eigen::MatrixXcd& initial,
                              const EvolveOptions& options) {
  const Eigen::Index dim = h.dimension();
  if (initial.rows() != dim) throw ConfigError("initial states do not match the branch dimension");
  if (!(options.steps_per_period >= 1.0)) throw ConfigError("steps_per_period must be positive");
  const auto& m = h.model();
  const auto& sched = h.schedule();
  const int n = h.cutoff();
  const int modes = h.modes();
  const int driven = m.driven;
  const TensorOps ops(n, modes, initial.cols());
  FrameRhs rhs(h, ops);

  double wmax = 0.0;
  for (double w : m.freqs) wmax = std::max(wmax, w);

  FrameState y{Eigen::VectorXcd::Zero(driven), initial, 0.0};
  FrameState k1, k2, k3, k4, tmp;
  double exact_phase = 0.0;
  long steps = 0;
  for (const auto& piece : sched.pieces) {
    const double len = piece.t1 - piece.t0;
    if (len <= 0.0) continue;
    const long count = std::max<long>(1, static_cast<long>(std::ceil(
                                             len * options.steps_per_period * wmax / kTwoPi - 1e-9)));
    const double dt = len / count;
    for (long s = 0; s < count; ++s) {
      const double t = piece.t0 + s * dt;
      rhs(piece, t, y, k1);
      axpy(tmp, y, 0.5 * dt, k1);
      rhs(piece, t + 0.5 * dt, tmp, k2);
      axpy(tmp, y, 0.5 * dt, k2);
      rhs(piece, t + 0.5 * dt, tmp, k3);
      axpy(tmp, y, dt, k3);
      rhs(piece, t + dt, tmp, k4);
      y.beta += dt / 6.0 * (k1.beta + 2.0 * k2.beta + 2.0 * k3.beta + k4.beta);
      y.psi += dt / 6.0 * (k1.psi + 2.0 * k2.psi + 2.0 * k3.psi + k4.psi);
      y.phase += dt / 6.0 * (k1.phase + 2.0 * k2.phase + 2.0 * k3.phase + k4.phase);
      ++steps;
      if (!y.psi.allFinite()) {
        std::ostringstream msg;
        msg << "branch state diverged at t = " << t + dt << " s; reduce the step";
        throw NumericalError(msg.str());
      }
      if (options.observer) {
        const double tt = t + dt;
        std::vector<cplx> mean(modes);
        const double norm = y.psi.col(0).squaredNorm();
        for (int mu = 0; mu < modes; ++mu) {
          cplx q = ops.lowering_mean(mu, y.psi) / norm * std::polar(1.0, -m.freqs[mu] * tt);
          if (mu < driven) q += y.beta(mu) * std::polar(1.0, -m.freqs[mu] * tt);
          mean[mu] = q;
        }
        options.observer(tt, mean);
      }
    }
    // Exact integral of the spin-linear c-number 2 |Omega| s cos c(t).
    const double slope_w = piece.slope * sched.omega;
    const double integral =
        (std::sin(sched.phase(piece, piece.t1)) - std::sin(sched.phase(piece, piece.t0))) / slope_w;
    for (int i = 0; i < driven; ++i) exact_phase += 2.0 * sched.rabi * h.signs()[i] * integral;
  }

  BranchEvolution out;
  out.steps = steps;
  const double T = sched.duration();
  out.max_norm_drift = 0.0;
  for (Eigen::Index c = 0; c < y.psi.cols(); ++c)
    out.max_norm_drift = std::max(out.max_norm_drift,
                                  std::abs(y.psi.col(c).norm() - initial.col(c).norm()));
  if (out.max_norm_drift > options.norm_tolerance) {
    std::ostringstream msg;
    msg << "branch norm drift " << out.max_norm_drift << " exceeds " << options.norm_tolerance
        << "; increase steps_per_period";
    throw NumericalError(msg.str());
  }
  for (int mu = 0; mu < modes; ++mu) {
    const Eigen::VectorXd top = ops.upper_population(mu, n - 2, y.psi);
    double worst = 0.0;
    for (Eigen::Index c = 0; c < top.size(); ++c)
      worst = std::max(worst, top(c) / y.psi.col(c).squaredNorm());
    out.top_population.push_back(worst);
  }

  // Back to the lab frame: exp(-i Phi) D(alpha(T)) exp(-i H0 T) psi_I.
  Eigen::MatrixXcd psi = std::move(y.psi);
  for (int mu = 0; mu < modes; ++mu) ops.apply_free(mu, m.freqs[mu] * T, psi);
  for (int i = 0; i < driven; ++i) {
    const cplx alpha = y.beta(i) * std::polar(1.0, -m.freqs[i] * T);
    out.classical_final.push_back(alpha);
    Eigen::MatrixXcd next = Eigen::MatrixXcd::Zero(psi.rows(), psi.cols());
    ops.apply_dense(i, displacement(alpha, n), psi, next);
    psi = std::move(next);
  }
  psi *= std::polar(1.0, -(y.phase + exact_phase));
  out.states = std::move(psi);
  return out;
}

namespace {

// Branch order ++, +-, -+, --.
constexpr std::array<std::array<int, 2>, 4> kSigns{{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};

double target_phase_for(const GateDesign& design, GateTarget target) {
  switch (target) {
    case GateTarget::cpf: return design.target_phase;
    case GateTarget::identity: return 0.0;
    case GateTarget::design_phase: return design.total_phase.phi_c;
  }
  return design.target_phase;
}

// Maximizes sum_{b,b'} w_b w_b' Re(exp(-i(theta_b - theta_b')) G(b', b)) over the z phases.
double optimize_z_phases(const Eigen::Matrix4cd& gram, const std::array<double, 4>& w,
                         double phi, std::array<double, 2>& lambda) {
  auto theta = [&](int b) {
    const auto& s = kSigns[b];
    return phi * s[0] * s[1] + lambda[0] * s[0] + lambda[1] * s[1];
  };
  auto value = [&]() {
    double f = 0.0;
    for (int b = 0; b < 4; ++b)
      for (int bp = 0; bp < 4; ++bp)
        f += w[b] * w[bp] * std::real(std::polar(1.0, -(theta(b) - theta(bp))) * gram(bp, b));
    return f;
  };
  double best = value();
  for (int it = 0; it < 500; ++it) {
    const double before = best;
    for (int q = 0; q < 2; ++q) {
      // The objective is a + Re(C exp(-2 i lambda_q)), maximal at lambda_q = arg(C) / 2.
      lambda[q] = 0.0;
      cplx coeff = 0.0;
      for (int b = 0; b < 4; ++b)
        for (int bp = 0; bp < 4; ++bp) {
          if (kSigns[b][q] - kSigns[bp][q] != 2) continue;
          const cplx term = std::polar(1.0, -(theta(b) - theta(bp))) * gram(bp, b);
          const cplx mirror = std::polar(1.0, -(theta(bp) - theta(b))) * gram(b, bp);
          coeff += w[b] * w[bp] * (term + std::conj(mirror));
        }
      lambda[q] = 0.5 * std::arg(coeff);
      best = value();
    }
    if (std::abs(best - before) <= 1e-16) break;
  }
  return best;
}

}  // namespace

FidelityReport numeric_gate_fidelity(const CrystalModel& crystal, const GateDesign& design,
                                     const SimConfig& sim, const ThermalSpec& thermal) {
  sim.validate();
  thermal.validate();
  if (sim.n_ions < 2) throw ConfigError("gate fidelity needs at least two ions");
  const SimModel model = make_sim_model(crystal, design.drive, sim);
  const DriveSchedule schedule = make_schedule(design);
  const int modes = static_cast<int>(model.freqs.size());
  const int cutoff = sim.fock_cutoff > 0 ? sim.fock_cutoff : auto_fock_cutoff(thermal, modes);
  const auto ensemble = thermal_ensemble(thermal, modes, 100000);
  for (const auto& e : ensemble)
    for (int k : e.n)
      if (k + 3 > cutoff) {
        std::ostringstream msg;
        msg << "thermal state with n = " << k << " needs fock_cutoff >= " << k + 3
            << " (have " << cutoff << ")";
        throw ConfigError(msg.str());
      }

  FidelityReport rep;
  rep.fock_cutoff = cutoff;
  rep.thermal_states = static_cast<int>(ensemble.size());
  double weight = 0.0;
  for (const auto& e : ensemble) weight += e.weight;
  rep.retained_weight = weight;
  rep.dF_analytic = analytic_infidelity(design.drive, design.omega_I, crystal.coordination,
                                        thermal.nbar, design.sequence.blocks());
  rep.dF_higher_order = higher_order_ld_infidelity(design.drive.eta, thermal.nbar);

  const Eigen::Index dim = ipow(cutoff, modes);
  const auto cols = static_cast<Eigen::Index>(ensemble.size());
  Eigen::MatrixXcd initial = Eigen::MatrixXcd::Zero(dim, cols);
  for (Eigen::Index c = 0; c < cols; ++c) initial(fock_index(ensemble[c].n, cutoff), c) = 1.0;

  // With two identical target modes and no spectator, (-,+) is (+,-) with the ions swapped.
  const bool swap_symmetric = modes == 2 && model.freqs[0] == model.freqs[1] &&
                              model.eta[0] == model.eta[1];
  EvolveOptions opt;
  opt.steps_per_period = sim.steps_per_period;
  opt.norm_tolerance = sim.norm_tolerance;

  std::array<Eigen::MatrixXcd, 4> finals;
  double worst_change = 0.0;
  for (int b = 0; b < 4; ++b) {
    if (swap_symmetric && b == 2) continue;
    const BranchHamiltonian h(model, schedule, kSigns[b], cutoff);
    auto ev = evolve_branch(h, initial, opt);
    rep.max_norm_drift = std::max(rep.max_norm_drift, ev.max_norm_drift);
    for (double p : ev.top_population) rep.max_top_population = std::max(rep.max_top_population, p);
    if (sim.convergence_check) {
      EvolveOptions fine = opt;
      fine.steps_per_period = 2.0 * opt.steps_per_period;
      auto ref = evolve_branch(h, initial.leftCols(1), fine);
      const double ov = std::abs(ref.states.col(0).dot(ev.states.col(0)));
      worst_change = std::max(worst_change, std::abs(1.0 - ov));
    }
    finals[b] = std::move(ev.states);
  }
  if (swap_symmetric) {
    // Column of the swapped Fock state, and the swapped-mode permutation of its final state.
    Eigen::MatrixXcd swapped(dim, cols);
    std::vector<Eigen::Index> column_of(dim, -1);
    for (Eigen::Index c = 0; c < cols; ++c) column_of[fock_index(ensemble[c].n, cutoff)] = c;
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& nv = ensemble[c].n;
      const Eigen::Index src = column_of[fock_index({nv[1], nv[0]}, cutoff)];
      if (src < 0) throw NumericalError("thermal ensemble is not swap symmetric");
      for (int i = 0; i < cutoff; ++i)
        for (int j = 0; j < cutoff; ++j) swapped(i + cutoff * j, c) = finals[1](j + cutoff * i, src);
    }
    finals[2] = std::move(swapped);
  }
  if (sim.convergence_check) {
    rep.step_halving_change = worst_change;
    if (worst_change > sim.convergence_tolerance) {
      std::ostringstream msg;
      msg << "halving the step changes the final-state overlap by " << worst_change
          << " (> " << sim.convergence_tolerance << "); increase steps_per_period";
      throw NumericalError(msg.str());
    }
  }
  if (rep.max_top_population > sim.leakage_tolerance) {
    std::ostringstream msg;
    msg << "Fock leakage: population " << rep.max_top_population
        << " in the top two levels exceeds " << sim.leakage_tolerance << "; increase fock_cutoff";
    throw NumericalError(msg.str());
  }

  // Thermally averaged overlaps G(b', b) = <psi_b'|psi_b>.
  Eigen::Matrix4cd gram = Eigen::Matrix4cd::Zero();
  for (int b = 0; b < 4; ++b)
    for (int bp = 0; bp < 4; ++bp) {
      cplx acc = 0.0;
      for (Eigen::Index c = 0; c < cols; ++c)
        acc += ensemble[c].weight * finals[bp].col(c).dot(finals[b].col(c));
      gram(bp, b) = acc / weight;
    }

  for (int b = 0; b < 4; ++b) {
    const cplx ov = finals[b].col(0).dot(initial.col(0));
    rep.branches[b].signs = kSigns[b];
    rep.branches[b].return_overlap = std::abs(ov);
    rep.branches[b].phase = std::arg(std::conj(ov));
  }

  const double phi_t = target_phase_for(design, sim.target);
  rep.target_phase = phi_t;
  const cplx z = gram(0, 0) * gram(0, 3) * std::conj(gram(0, 1)) * std::conj(gram(0, 2));
  rep.measured_phi_c = phi_t + std::arg(z * std::polar(1.0, -4.0 * phi_t)) / 4.0;

  std::array<double, 4> w{};
  for (int b = 0; b < 4; ++b) w[b] = std::norm(sim.spin_input[b]);
  std::array<double, 2> lambda{0.0, 0.0};
  rep.fidelity = optimize_z_phases(gram, w, phi_t, lambda);
  rep.z_correction = lambda;
  rep.dF_numeric = 1.0 - rep.fidelity;
  if (rep.dF_numeric < -1e-10) {
    std::ostringstream msg;
    msg << "numeric infidelity " << rep.dF_numeric << " is below the noise floor";
    throw NumericalError(msg.str());
  }
  return rep;
}

}  // namespace lpgate
