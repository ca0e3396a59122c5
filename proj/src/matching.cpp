#include "hierkit/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hierkit {

double similarity(const PredictionSlot& pred, const TargetSlot& target) {
  const double y_hat = pred.textness;
  if (!(y_hat >= 0.0 && y_hat <= 1.0)) {
    throw ValidationError("textness outside [0,1]: " + std::to_string(y_hat));
  }
  const double y = target.is_text ? 1.0 : 0.0;
  const double cls = y_hat * y + (1.0 - y_hat) * (1.0 - y);
  return cls * dice(pred.soft_mask, target.mask);
}

Matrix similarity_matrix(const std::vector<PredictionSlot>& preds,
                         const std::vector<TargetSlot>& targets) {
  if (preds.size() != targets.size()) {
    throw ValidationError("similarity_matrix: " + std::to_string(preds.size()) +
                          " predictions vs " + std::to_string(targets.size()) + " targets");
  }
  const int n = static_cast<int>(preds.size());
  Matrix sim(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      sim.at(i, j) = similarity(preds[i], targets[j]);
    }
  }
  return sim;
}

std::vector<TargetSlot> pad_targets(std::vector<TargetSlot> real_targets, int n, int width,
                                    int height) {
  if (static_cast<int>(real_targets.size()) > n) {
    throw ValidationError("pad_targets: " + std::to_string(real_targets.size()) +
                          " ground-truth entities exceed the slot count " + std::to_string(n) +
                          "; raise N");
  }
  int w = width, h = height;
  if (!real_targets.empty()) {
    w = real_targets.front().mask.width();
    h = real_targets.front().mask.height();
  }
  while (static_cast<int>(real_targets.size()) < n) {
    TargetSlot pad;
    pad.mask = BitMask(w, h);
    pad.is_text = 0;
    pad.cluster_id = -1;
    real_targets.push_back(std::move(pad));
  }
  return real_targets;
}

namespace {

// Jonker-Volgenant style shortest augmenting path solver (minimization).
// On return rowsol[i] is the column of row i and (u, v) are dual potentials
// with cost[i][j] - u[i] - v[j] >= 0 everywhere and == 0 on assigned edges.
void jv_solve(const Matrix& cost, std::vector<int>& rowsol, std::vector<double>& u,
              std::vector<double>& v) {
  const int n = cost.rows;
  u.assign(n + 1, 0.0);
  v.assign(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = std::numeric_limits<double>::infinity();
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  rowsol.assign(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j]) rowsol[p[j] - 1] = j - 1;
  }
}

// Augmenting-path search over tight edges, restricted to free rows/cols.
bool try_augment(int row, const std::vector<std::vector<int>>& tight_cols,
                 const std::vector<char>& col_blocked, std::vector<int>& col_to_row,
                 std::vector<char>& visited) {
  for (int j : tight_cols[row]) {
    if (col_blocked[j] || visited[j]) continue;
    visited[j] = 1;
    if (col_to_row[j] < 0 ||
        try_augment(col_to_row[j], tight_cols, col_blocked, col_to_row, visited)) {
      col_to_row[j] = row;
      return true;
    }
  }
  return false;
}

double row_ordered_total(const Matrix& sim, const std::vector<int>& sigma) {
  double total = 0.0;
  for (int i = 0; i < sim.rows; ++i) total += sim.at(i, sigma[i]);
  return total;
}

}  // namespace

Assignment solve_max_assignment(const Matrix& sim) {
  if (sim.rows != sim.cols) {
    throw ValidationError("solve_max_assignment: matrix must be square");
  }
  const int n = sim.rows;
  if (n == 0) return Assignment{{}, 0.0};
  for (double s : sim.data) {
    if (!std::isfinite(s)) throw ValidationError("solve_max_assignment: non-finite similarity");
  }

  Matrix cost(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      cost.at(i, j) = std::clamp(1.0 - sim.at(i, j), 0.0, 1.0);
    }
  }
  std::vector<int> rowsol;
  std::vector<double> u, v;
  jv_solve(cost, rowsol, u, v);

  // Every optimal assignment is a perfect matching of the tight subgraph
  // (zero reduced cost w.r.t. the optimal duals). Canonicalize to the
  // lexicographically smallest such matching: fix rows in order, keeping
  // the remainder perfectly matchable.
  const double tol = 1e-9;
  std::vector<std::vector<int>> tight_cols(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (cost.at(i, j) - u[i + 1] - v[j + 1] <= tol) tight_cols[i].push_back(j);
    }
  }

  std::vector<int> col_to_row(n, -1);
  for (int i = 0; i < n; ++i) col_to_row[rowsol[i]] = i;
  std::vector<char> col_blocked(n, 0);
  std::vector<int> sigma(n, -1);
  for (int i = 0; i < n; ++i) {
    for (int j : tight_cols[i]) {
      if (col_blocked[j]) continue;
      if (col_to_row[j] == i) {
        sigma[i] = j;
        col_blocked[j] = 1;
        break;
      }
      // Try to steal column j for row i and rematch its current owner.
      const int displaced = col_to_row[j];
      const int freed = [&] {
        for (int c = 0; c < n; ++c) {
          if (col_to_row[c] == i) return c;
        }
        return -1;
      }();
      col_to_row[j] = i;
      if (freed >= 0) col_to_row[freed] = -1;
      std::vector<char> visited(n, 0);
      visited[j] = 1;
      if (displaced < 0 ||
          try_augment(displaced, tight_cols, col_blocked, col_to_row, visited)) {
        sigma[i] = j;
        col_blocked[j] = 1;
        break;
      }
      // Roll back.
      col_to_row[j] = displaced;
      if (freed >= 0) col_to_row[freed] = i;
    }
    if (sigma[i] < 0) {
      // Tolerance starved the tight graph; fall back to the JV solution for
      // this row. Rare and still optimal, only the tie-break is affected.
      sigma[i] = rowsol[i];
      col_blocked[rowsol[i]] = 1;
    }
  }

  Assignment out;
  out.sigma = std::move(sigma);
  out.total_similarity = row_ordered_total(sim, out.sigma);
  return out;
}

Assignment brute_force_max_assignment(const Matrix& sim) {
  if (sim.rows != sim.cols) {
    throw ValidationError("brute_force_max_assignment: matrix must be square");
  }
  const int n = sim.rows;
  if (n > 8) {
    throw ValidationError("brute_force_max_assignment: N=" + std::to_string(n) + " exceeds 8");
  }
  if (n == 0) return Assignment{{}, 0.0};
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Assignment best;
  best.sigma = perm;
  best.total_similarity = row_ordered_total(sim, perm);
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double total = row_ordered_total(sim, perm);
    if (total > best.total_similarity) {
      best.sigma = perm;
      best.total_similarity = total;
    }
  }
  return best;
}

Assignment match(const std::vector<PredictionSlot>& preds,
                 const std::vector<TargetSlot>& targets) {
  return solve_max_assignment(similarity_matrix(preds, targets));
}

Assignment brute_force_match(const std::vector<PredictionSlot>& preds,
                             const std::vector<TargetSlot>& targets) {
  return brute_force_max_assignment(similarity_matrix(preds, targets));
}

}  // namespace hierkit
