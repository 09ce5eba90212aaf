#pragma once

// Levenberg-Marquardt over a vector of manifold-valued variables, each with a
// BlockDim-dimensional tangent. The normal equations are assembled sparsely
// and factored with a simplicial LDL^T under AMD ordering.

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ramba/error.hpp"
#include "ramba/factors.hpp"

namespace ramba {

struct LmParams {
  int max_iterations = 6;
  double initial_lambda = 1e-4;
  double lambda_decrease = 0.5;
  double lambda_increase = 10.0;
  int max_factorization_retries = 5;
  double min_relative_decrease = 1e-6;
  double min_step_norm = 1e-8;
  /// Lower bound on diagonal entries used for Marquardt scaling, so that
  /// unconstrained tangent directions stay solvable.
  double min_diagonal = 1e-6;
};

struct LmIteration {
  double objective_before = 0.0;
  double objective_after = 0.0;
  double step_norm = 0.0;
  double lambda = 0.0;
  bool accepted = false;
};

struct LmSummary {
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double gradient_norm = 0.0;
  std::vector<LmIteration> iterations;
  std::string termination;
};

/// Problem must provide
///   std::vector<FactorBlock> linearize(const std::vector<State>&) const;
///   double objective(const std::vector<State>&) const;
///   State retract(const State&, const Eigen::Matrix<double, BlockDim, 1>&) const;
/// Factor Jacobians must have BlockDim columns. Variables flagged in `fixed`
/// are held constant.
template <int BlockDim, class Problem, class State>
LmSummary solve_sparse_lm(const Problem& problem, std::vector<State>& states,
                          const std::vector<bool>& fixed, const LmParams& params) {
  using Step = Eigen::Matrix<double, BlockDim, 1>;
  const std::size_t n = states.size();
  std::vector<int> slot(n, -1);
  int free_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= fixed.size() || !fixed[i]) slot[i] = free_count++;
  }

  LmSummary summary;
  double cost = problem.objective(states);
  summary.initial_objective = cost;
  summary.final_objective = cost;
  if (free_count == 0 || params.max_iterations <= 0) {
    summary.termination = "nothing to optimize";
    return summary;
  }
  const int dim = free_count * BlockDim;

  Eigen::SparseMatrix<double> H(dim, dim);
  Eigen::VectorXd g(dim);
  bool need_linearize = true;
  double lambda = params.initial_lambda;

  // Dense BlockDim x BlockDim blocks keyed by (row slot, column slot); the
  // ordered map keeps assembly order, and hence rounding, deterministic.
  using JacBlock = Eigen::Matrix<double, Eigen::Dynamic, BlockDim>;
  using HessBlock = Eigen::Matrix<double, BlockDim, BlockDim>;
  auto linearize = [&]() {
    std::map<std::pair<int, int>, HessBlock> blocks;
    g.setZero();
    std::vector<JacBlock> J;
    std::vector<int> slots;
    for (const FactorBlock& f : problem.linearize(states)) {
      const Eigen::VectorXd r = f.sqrt_information * f.residual;
      J.clear();
      slots.clear();
      for (std::size_t a = 0; a < f.states.size(); ++a) {
        const int sa = slot[f.states[a]];
        if (sa < 0) continue;
        J.push_back(f.sqrt_information * f.jacobians[a]);
        slots.push_back(sa);
      }
      for (std::size_t a = 0; a < J.size(); ++a) {
        g.template segment<BlockDim>(slots[a] * BlockDim).noalias() += J[a].transpose() * r;
        for (std::size_t b = a; b < J.size(); ++b) {
          const int lo = std::min(slots[a], slots[b]);
          const int hi = std::max(slots[a], slots[b]);
          auto [it, inserted] = blocks.try_emplace({lo, hi}, HessBlock::Zero());
          if (slots[a] <= slots[b]) {
            it->second.noalias() += J[a].transpose() * J[b];
          } else {
            it->second.noalias() += J[b].transpose() * J[a];
          }
        }
      }
    }
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(blocks.size() * 2 * BlockDim * BlockDim + static_cast<std::size_t>(dim));
    for (const auto& [key, blk] : blocks) {
      const auto [lo, hi] = key;
      for (int r0 = 0; r0 < BlockDim; ++r0) {
        for (int c0 = 0; c0 < BlockDim; ++c0) {
          triplets.emplace_back(lo * BlockDim + r0, hi * BlockDim + c0, blk(r0, c0));
          if (lo != hi) triplets.emplace_back(hi * BlockDim + c0, lo * BlockDim + r0, blk(r0, c0));
        }
      }
    }
    for (int d = 0; d < dim; ++d) triplets.emplace_back(d, d, 0.0);
    H.setFromTriplets(triplets.begin(), triplets.end());
    summary.gradient_norm = g.norm();
  };

  // Blocks are emitted in full, so the pattern only changes with the factor
  // structure; it is re-analyzed after every linearization regardless.
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool pattern_analyzed = false;

  for (int it = 0; it < params.max_iterations; ++it) {
    if (need_linearize) {
      linearize();
      need_linearize = false;
      pattern_analyzed = false;
    }

    Eigen::VectorXd dx;
    bool solved = false;
    for (int attempt = 0; attempt <= params.max_factorization_retries; ++attempt) {
      Eigen::SparseMatrix<double> A = H;
      for (int d = 0; d < dim; ++d) {
        A.coeffRef(d, d) += lambda * std::max(H.coeff(d, d), params.min_diagonal);
      }
      if (!pattern_analyzed) {
        ldlt.analyzePattern(A);
        pattern_analyzed = true;
      }
      ldlt.factorize(A);
      if (ldlt.info() == Eigen::Success) {
        dx = ldlt.solve(-g);
        if (ldlt.info() == Eigen::Success && dx.allFinite()) {
          solved = true;
          break;
        }
      }
      lambda *= params.lambda_increase;
    }
    if (!solved) {
      fail(ErrorCategory::kNumerical,
           "normal equations could not be factored after " +
               std::to_string(params.max_factorization_retries) +
               " damping increases (lambda=" + std::to_string(lambda) + ")");
    }

    LmIteration record;
    record.objective_before = cost;
    record.step_norm = dx.norm();
    record.lambda = lambda;
    if (record.step_norm < params.min_step_norm) {
      record.objective_after = cost;
      summary.iterations.push_back(record);
      summary.termination = "step norm below tolerance";
      break;
    }

    std::vector<State> candidate = states;
    for (std::size_t i = 0; i < n; ++i) {
      if (slot[i] < 0) continue;
      candidate[i] = problem.retract(states[i], Step(dx.segment<BlockDim>(slot[i] * BlockDim)));
    }
    const double new_cost = problem.objective(candidate);
    record.objective_after = new_cost;
    if (std::isfinite(new_cost) && new_cost < cost) {
      record.accepted = true;
      summary.iterations.push_back(record);
      const double rel = (cost - new_cost) / std::max(cost, 1e-300);
      states = std::move(candidate);
      cost = new_cost;
      lambda *= params.lambda_decrease;
      need_linearize = true;
      if (rel < params.min_relative_decrease) {
        summary.termination = "relative decrease below tolerance";
        break;
      }
    } else {
      record.objective_after = cost;
      summary.iterations.push_back(record);
      lambda *= params.lambda_increase;
    }
  }
  if (summary.termination.empty()) summary.termination = "iteration limit";
  summary.final_objective = cost;
  return summary;
}

}  // namespace ramba
