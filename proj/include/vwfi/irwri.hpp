#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <thread>
#include <vector>

#include "vwfi/helmholtz.hpp"
#include "vwfi/regularizers.hpp"

namespace vwfi {

// IR-WRI outer loop: alternate the data-assimilated wavefield reconstruction
// and the model estimation from virtual sources, then update the scaled
// duals by the constraint violations. Multi-frequency batches share one
// frequency-independent model; continuation warm-starts each batch from the
// previous one.

struct FrequencyBatch {
  std::vector<double> omegas;  // rad/s, strictly increasing

  void validate() const {
    if (omegas.empty()) throw std::invalid_argument("FrequencyBatch: empty");
    for (size_t i = 0; i + 1 < omegas.size(); ++i)
      if (!(omegas[i] < omegas[i + 1]))
        throw std::invalid_argument("FrequencyBatch: frequencies must be strictly increasing");
    if (!(omegas.front() > 0.0)) throw std::invalid_argument("FrequencyBatch: need omega > 0");
  }
};

/// Slide a window of `batch_size` frequencies with `overlap` shared between
/// consecutive batches over f_min, f_min+df, ..., f_max; a final short batch
/// holds any remainder. Frequencies in Hz, batches in rad/s.
inline std::vector<FrequencyBatch> build_batches(double f_min, double f_max, double df,
                                                 int batch_size, int overlap) {
  if (!(f_min > 0.0) || !(f_max >= f_min) || !(df > 0.0))
    throw std::invalid_argument("build_batches: need 0 < f_min <= f_max and df > 0");
  if (batch_size < 1 || overlap < 0 || overlap >= batch_size)
    throw std::invalid_argument("build_batches: need batch_size >= 1 and 0 <= overlap < batch_size");
  std::vector<double> freqs;
  for (int k = 0;; ++k) {
    const double f = f_min + k * df;
    if (f > f_max * (1.0 + 1e-12)) break;
    freqs.push_back(f);
  }
  std::vector<FrequencyBatch> batches;
  size_t start = 0;
  while (true) {
    const size_t end = std::min(start + static_cast<size_t>(batch_size), freqs.size());
    FrequencyBatch b;
    for (size_t i = start; i < end; ++i) b.omegas.push_back(2.0 * M_PI * freqs[i]);
    b.validate();
    batches.push_back(std::move(b));
    if (end == freqs.size()) break;
    start += static_cast<size_t>(batch_size - overlap);
  }
  return batches;
}

struct Acquisition {
  std::vector<SourceTerm> sources;
  ObservationOperator receivers;
};

/// Observed data indexed [frequency][source], each a receiver-length vector.
using BatchData = std::vector<std::vector<VecC>>;

enum class RegChoice { None, Alg1, Alg2, Alg3 };

inline const char* to_string(RegChoice r) {
  switch (r) {
    case RegChoice::None: return "none";
    case RegChoice::Alg1: return "alg1";
    case RegChoice::Alg2: return "alg2";
    case RegChoice::Alg3: return "alg3";
  }
  return "?";
}

struct StoppingCriteria {
  double eps_b = 1e-3;
  double eps_d = 1e-5;
  int max_iters = 15;
  bool relative = false;  // scale thresholds by the source/data energies

  void validate() const {
    if (!(eps_b > 0.0) || !(eps_d > 0.0) || max_iters < 1)
      throw std::invalid_argument("StoppingCriteria: thresholds must be > 0, max_iters >= 1");
  }
};

enum class StopStatus { Continue, Converged, MaxIters };

struct IrwriOptions {
  double lambda = 1.0;
  double gamma = 0.0;  // <= 0: lambda * max||A^H b||inf / max||P^T d||inf, once per batch
  RegChoice reg = RegChoice::None;
  RegHyperparams reg_hyper;  // lambda is overridden by the outer lambda
  StoppingCriteria stop;
  PmlProfile pml;
  Stencil stencil = Stencil::NinePoint;
  int threads = 1;
};

/// Current model, per-(source, frequency) wavefields and scaled duals.
struct IrwriState {
  VecC m;
  std::vector<std::vector<VecC>> u;       // [freq][source], length n
  std::vector<std::vector<VecC>> b_dual;  // [freq][source], length n
  std::vector<std::vector<VecC>> d_dual;  // [freq][source], length #receivers
  int iter = 0;

  static IrwriState init(const VecC& m0, size_t n_freq, size_t n_src, Eigen::Index n,
                         Eigen::Index n_rec) {
    IrwriState st;
    st.m = m0;
    st.u.assign(n_freq, std::vector<VecC>(n_src, VecC::Zero(n)));
    st.b_dual.assign(n_freq, std::vector<VecC>(n_src, VecC::Zero(n)));
    st.d_dual.assign(n_freq, std::vector<VecC>(n_src, VecC::Zero(n_rec)));
    return st;
  }
};

/// Stacked diagonal operator L and right-hand side y of the model subproblem,
/// one block per (frequency, source).
struct VirtualSourceSystem {
  std::vector<VecC> diag_blocks;  // w^2 C diag(B u)
  std::vector<VecC> rhs_blocks;   // b_dual + b - Lap u

  Eigen::Index n() const { return diag_blocks.empty() ? 0 : diag_blocks.front().size(); }

  VecC stacked_rhs() const {
    VecC y(static_cast<Eigen::Index>(rhs_blocks.size()) * n());
    for (size_t b = 0; b < rhs_blocks.size(); ++b)
      y.segment(static_cast<Eigen::Index>(b) * n(), n()) = rhs_blocks[b];
    return y;
  }

  DiagonalStackMeasurement measurement() const {
    return DiagonalStackMeasurement(diag_blocks, stacked_rhs());
  }
};

namespace detail {
inline void parallel_over(int n_tasks, int threads, const std::function<void(int)>& body) {
  if (threads <= 1 || n_tasks <= 1) {
    for (int t = 0; t < n_tasks; ++t) body(t);
    return;
  }
  const int workers = std::min(threads, n_tasks);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (int t = w; t < n_tasks; t += workers) body(t);
    });
  for (auto& th : pool) th.join();
}
}  // namespace detail

/// Solve the augmented wavefield problem for every (source, frequency) at
/// the current model; solvers must be refactored for the current systems.
inline void wavefield_step(IrwriState& st, const std::vector<HelmholtzSystem>& systems,
                           const std::vector<AugmentedWavefieldSolver>& solvers,
                           const Acquisition& acq, const BatchData& data, int threads = 1) {
  const int n_freq = static_cast<int>(systems.size());
  const int n_src = static_cast<int>(acq.sources.size());
  detail::parallel_over(n_freq * n_src, threads, [&](int t) {
    const int l = t / n_src, s = t % n_src;
    const VecC rhs_b = systems[static_cast<size_t>(l)].rhs_of(acq.sources[static_cast<size_t>(s)]) +
                       st.b_dual[static_cast<size_t>(l)][static_cast<size_t>(s)];
    const VecC rhs_d = data[static_cast<size_t>(l)][static_cast<size_t>(s)] +
                       st.d_dual[static_cast<size_t>(l)][static_cast<size_t>(s)];
    st.u[static_cast<size_t>(l)][static_cast<size_t>(s)] =
        solvers[static_cast<size_t>(l)].solve(rhs_b, rhs_d);
  });
}

/// Per-(frequency, source) blocks L = w^2 C diag(B u), y = b_dual + b - Lap u.
inline VirtualSourceSystem assemble_virtual_sources(const IrwriState& st,
                                                    const std::vector<HelmholtzSystem>& systems,
                                                    const Acquisition& acq) {
  VirtualSourceSystem vs;
  for (size_t l = 0; l < systems.size(); ++l)
    for (size_t s = 0; s < acq.sources.size(); ++s) {
      vs.diag_blocks.push_back(systems[l].virtual_source_diag(st.u[l][s]));
      vs.rhs_blocks.push_back(st.b_dual[l][s] + systems[l].rhs_of(acq.sources[s]) -
                              systems[l].apply_laplacian(st.u[l][s]));
    }
  return vs;
}

struct ModelStepResult {
  VecC m;
  int flagged_cells = 0;  // zero-denominator cells kept at their previous value
};

/// Closed-form weighted least squares per cell (no regularization):
///   m_i = sum_b conj(L_bi) y_bi / sum_b |L_bi|^2.
inline ModelStepResult model_step_none(const VirtualSourceSystem& vs, const VecC& m_prev) {
  const Eigen::Index n = vs.n();
  if (n == 0 || m_prev.size() != n) throw std::invalid_argument("model_step: empty system");
  VecC num = VecC::Zero(n);
  VecR den = VecR::Zero(n);
  for (size_t b = 0; b < vs.diag_blocks.size(); ++b) {
    num += vs.diag_blocks[b].conjugate().cwiseProduct(vs.rhs_blocks[b]);
    den += vs.diag_blocks[b].cwiseAbs2();
  }
  ModelStepResult out;
  out.m = m_prev;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (den[i] > 0.0)
      out.m[i] = num[i] / den[i];
    else
      ++out.flagged_cells;
  }
  return out;
}

/// Dual ascent: b_dual <- b_dual + b - A(m_new) u  (computed through the
/// virtual-source identity b - A(m)u = y - L m - b_dual), and
/// d_dual <- d_dual + d - P u. Returns the squared residual sums
/// (sum ||A u - b||^2, sum ||P u - d||^2) entering the stopping test.
inline std::pair<double, double> dual_update(IrwriState& st, const VirtualSourceSystem& vs,
                                             const VecC& m_new, const Acquisition& acq,
                                             const BatchData& data) {
  const size_t n_src = acq.sources.size();
  double src_sq = 0.0, data_sq = 0.0;
  size_t block = 0;
  for (size_t l = 0; l < st.u.size(); ++l)
    for (size_t s = 0; s < n_src; ++s, ++block) {
      const VecC new_b = vs.rhs_blocks[block] - vs.diag_blocks[block].cwiseProduct(m_new);
      src_sq += (new_b - st.b_dual[l][s]).squaredNorm();
      st.b_dual[l][s] = new_b;
      const VecC data_res = acq.receivers.sample(st.u[l][s]) - data[l][s];
      data_sq += data_res.squaredNorm();
      st.d_dual[l][s] -= data_res;  // += d - P u
    }
  st.m = m_new;
  return {src_sq, data_sq};
}

/// Stopping test: Converged iff both residual sums are at or below their
/// thresholds (optionally scaled by the source/data energies); MaxIters when
/// the iteration counter reaches the cap.
inline StopStatus check_stop(double src_residual_sq, double data_residual_sq,
                             const StoppingCriteria& crit, int iters_done,
                             double b_energy = 1.0, double d_energy = 1.0) {
  crit.validate();
  const double eb = crit.relative ? crit.eps_b * b_energy : crit.eps_b;
  const double ed = crit.relative ? crit.eps_d * d_energy : crit.eps_d;
  if (src_residual_sq <= eb && data_residual_sq <= ed) return StopStatus::Converged;
  if (iters_done >= crit.max_iters) return StopStatus::MaxIters;
  return StopStatus::Continue;
}

struct ConvergenceRecord {
  int iter = 0;
  double source_residual_sq = 0.0;
  double data_residual_sq = 0.0;
  double model_change = 0.0;
  double wall_seconds = 0.0;
};

struct ConvergenceLog {
  std::vector<ConvergenceRecord> rows;

  void write_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << "iter,source_residual_sq,data_residual_sq,model_change,wall_seconds\n";
    f.precision(17);
    for (const auto& r : rows)
      f << r.iter << ',' << r.source_residual_sq << ',' << r.data_residual_sq << ','
        << r.model_change << ',' << r.wall_seconds << '\n';
  }
};

struct BatchResult {
  VecC m;
  ConvergenceLog log;
  StopStatus status = StopStatus::MaxIters;
  int iterations = 0;
  int flagged_cells = 0;
  double gamma_used = 0.0;
};

inline BatchResult run_batch(const Grid2D& grid, const VecC& m_init, const FrequencyBatch& batch,
                             const Acquisition& acq, const BatchData& data,
                             const IrwriOptions& opt) {
  batch.validate();
  opt.stop.validate();
  check_field(grid, m_init.size(), "run_batch");
  acq.receivers.validate(grid.n());
  if (acq.sources.empty()) throw std::invalid_argument("run_batch: no sources");
  const size_t n_freq = batch.omegas.size(), n_src = acq.sources.size();
  if (data.size() != n_freq)
    throw std::invalid_argument("run_batch: data frequency count mismatch");
  for (const auto& per_src : data) {
    if (per_src.size() != n_src) throw std::invalid_argument("run_batch: data source count mismatch");
    for (const auto& d : per_src)
      if (d.size() != acq.receivers.size())
        throw std::invalid_argument("run_batch: data receiver count mismatch");
  }

  IrwriState st = IrwriState::init(m_init, n_freq, n_src, grid.n(), acq.receivers.size());

  // Penalty balance, computed once per batch at the initial model.
  std::vector<HelmholtzSystem> systems;
  systems.reserve(n_freq);
  for (double w : batch.omegas)
    systems.push_back(HelmholtzSystem::assemble(grid, st.m, w, opt.pml, opt.stencil));
  double gamma = opt.gamma;
  if (gamma <= 0.0) {
    double num = 0.0, den = 0.0;
    for (size_t l = 0; l < n_freq; ++l)
      for (size_t s = 0; s < n_src; ++s) {
        num = std::max(num, VecC(systems[l].matrix().adjoint() *
                                 systems[l].rhs_of(acq.sources[s])).cwiseAbs().maxCoeff());
        den = std::max(den, data[l][s].cwiseAbs().maxCoeff());
      }
    if (!(den > 0.0)) den = 1.0;
    gamma = opt.lambda * num / den;
  }

  std::vector<AugmentedWavefieldSolver> solvers;
  solvers.reserve(n_freq);
  for (size_t l = 0; l < n_freq; ++l)
    solvers.emplace_back(acq.receivers, opt.lambda, gamma);

  RegHyperparams hyper = opt.reg_hyper;
  hyper.lambda = opt.lambda;
  std::unique_ptr<SplitBregmanTvSolver> tv_solver;
  std::unique_ptr<MagnitudePhaseTvSolver> mp_solver;
  if (opt.reg == RegChoice::Alg1)
    tv_solver = std::make_unique<SplitBregmanTvSolver>(SplitBregmanTvSolver::Mode::Joint, grid, hyper);
  else if (opt.reg == RegChoice::Alg2)
    tv_solver = std::make_unique<SplitBregmanTvSolver>(SplitBregmanTvSolver::Mode::SeparateRI, grid, hyper);
  else if (opt.reg == RegChoice::Alg3) {
    mp_solver = std::make_unique<MagnitudePhaseTvSolver>(grid, hyper);
    mp_solver->initialize_from(st.m);
  }

  double b_energy = 0.0, d_energy = 0.0;
  for (size_t l = 0; l < n_freq; ++l)
    for (size_t s = 0; s < n_src; ++s) {
      b_energy += std::norm(acq.sources[s].amplitude);
      d_energy += data[l][s].squaredNorm();
    }

  BatchResult out;
  out.gamma_used = gamma;
  const auto t_start = std::chrono::steady_clock::now();
  for (int k = 0; k < opt.stop.max_iters; ++k) {
    if (k > 0)
      for (size_t l = 0; l < n_freq; ++l)
        systems[l] = HelmholtzSystem::assemble(grid, st.m, batch.omegas[l], opt.pml, opt.stencil);
    for (size_t l = 0; l < n_freq; ++l) solvers[l].refactor(systems[l]);

    wavefield_step(st, systems, solvers, acq, data, opt.threads);
    const VirtualSourceSystem vs = assemble_virtual_sources(st, systems, acq);

    ModelStepResult ms;
    if (opt.reg == RegChoice::None) {
      ms = model_step_none(vs, st.m);
    } else {
      const DiagonalStackMeasurement meas = vs.measurement();
      if (tv_solver)
        ms.m = tv_solver->step(meas, meas.data(), true);
      else
        ms.m = mp_solver->step(meas, meas.data(), true).model();
    }
    for (Eigen::Index i = 0; i < ms.m.size(); ++i)
      if (!std::isfinite(ms.m[i].real()) || !std::isfinite(ms.m[i].imag()))
        throw SolverError("run_batch: model diverged (nonfinite cell " + std::to_string(i) +
                          " at iteration " + std::to_string(k + 1) + ")");

    const double model_change = (ms.m - st.m).norm();
    const auto [src_sq, data_sq] = dual_update(st, vs, ms.m, acq, data);
    st.iter = k + 1;
    out.flagged_cells = ms.flagged_cells;

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    out.log.rows.push_back({st.iter, src_sq, data_sq, model_change, elapsed});

    const StopStatus status = check_stop(src_sq, data_sq, opt.stop, st.iter, b_energy, d_energy);
    if (status != StopStatus::Continue) {
      out.status = status;
      break;
    }
  }
  out.iterations = st.iter;
  out.m = st.m;
  return out;
}

struct ContinuationResult {
  VecC m_final;
  std::vector<BatchResult> batches;
};

/// Frequency continuation: run the batches low to high, warm-starting each
/// from the previous final model; duals and split states start from zero in
/// every batch.
inline ContinuationResult run_continuation(const Grid2D& grid, const VecC& m_init,
                                           const std::vector<FrequencyBatch>& batches,
                                           const Acquisition& acq,
                                           const std::vector<BatchData>& data,
                                           const IrwriOptions& opt) {
  if (batches.empty()) throw std::invalid_argument("run_continuation: no batches");
  if (data.size() != batches.size())
    throw std::invalid_argument("run_continuation: one data block per batch required");
  ContinuationResult out;
  VecC m = m_init;
  for (size_t b = 0; b < batches.size(); ++b) {
    out.batches.push_back(run_batch(grid, m, batches[b], acq, data[b], opt));
    m = out.batches.back().m;
  }
  out.m_final = m;
  return out;
}

}  // namespace vwfi
