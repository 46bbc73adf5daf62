#include "jseg/crf.hpp"

#include <cmath>
#include <limits>

namespace jseg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp(const Eigen::Ref<const RowVector>& v) {
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  return m + std::log((v.array() - m).exp().sum());
}

// alpha(i, j): log-sum of all prefixes ending in label j at position i.
Matrix forward_scores(const ScoreLattice& lat) {
  const int n = lat.length();
  const int k = lat.labels();
  Matrix alpha(n, k);
  alpha.row(0) = lat.start.transpose() + lat.S.row(0);
  RowVector tmp(k);
  for (int i = 1; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      tmp = alpha.row(i - 1) + lat.T.col(j).transpose();
      alpha(i, j) = logsumexp(tmp) + lat.S(i, j);
    }
  }
  return alpha;
}

// beta(i, j): log-sum of all suffixes after position i given label j there.
Matrix backward_scores(const ScoreLattice& lat) {
  const int n = lat.length();
  const int k = lat.labels();
  Matrix beta(n, k);
  beta.row(n - 1) = lat.end.transpose();
  RowVector tmp(k);
  for (int i = n - 2; i >= 0; --i) {
    const RowVector next = beta.row(i + 1) + lat.S.row(i + 1);
    for (int j = 0; j < k; ++j) {
      tmp = lat.T.row(j) + next;
      beta(i, j) = logsumexp(tmp);
    }
  }
  return beta;
}

std::vector<int> viterbi_impl(const ScoreLattice& lat, const TransitionMask* mask) {
  lat.validate();
  const int n = lat.length();
  const int k = lat.labels();
  RowVector score = lat.start.transpose() + lat.S.row(0);
  if (mask) score += mask->start.transpose();
  std::vector<int> back(static_cast<std::size_t>(n) * static_cast<std::size_t>(k), 0);
  RowVector next(k);
  for (int i = 1; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      double best = kNegInf;
      int arg = 0;
      for (int p = 0; p < k; ++p) {
        double s = score[p] + lat.T(p, j);
        if (mask) s += mask->transition(p, j);
        if (s > best) {
          best = s;
          arg = p;
        }
      }
      next[j] = best + lat.S(i, j);
      back[static_cast<std::size_t>(i) * k + j] = arg;
    }
    std::swap(score, next);
  }
  score += lat.end.transpose();
  if (mask) score += mask->end.transpose();
  int last = 0;
  for (int j = 1; j < k; ++j) {
    if (score[j] > score[last]) last = j;
  }
  if (score[last] == kNegInf) return {};
  std::vector<int> path(static_cast<std::size_t>(n));
  path[static_cast<std::size_t>(n - 1)] = last;
  for (int i = n - 1; i > 0; --i) {
    last = back[static_cast<std::size_t>(i) * k + last];
    path[static_cast<std::size_t>(i - 1)] = last;
  }
  return path;
}

}  // namespace

void ScoreLattice::validate() const {
  const auto n = S.rows();
  const auto k = S.cols();
  if (n < 1 || k < 1) throw Error("score lattice must have n >= 1 and k >= 1");
  if (T.rows() != k || T.cols() != k || start.size() != k || end.size() != k) {
    throw Error("score lattice shapes are inconsistent");
  }
  if (!S.allFinite() || !T.allFinite() || !start.allFinite() || !end.allFinite()) {
    throw Error("score lattice contains non-finite values");
  }
}

CrfParams CrfParams::zeros(int input, int k) {
  return {Matrix::Zero(input, k), Vector::Zero(k), Matrix::Zero(k, k), Vector::Zero(k), Vector::Zero(k)};
}

Matrix emissions(const Matrix& H, const CrfParams& p) {
  if (H.cols() != p.W.rows()) throw Error("emission projection: input width mismatch");
  if (p.b.size() != p.W.cols()) throw Error("emission projection: bias size mismatch");
  Matrix S = H * p.W;
  S.rowwise() += p.b.transpose();
  return S;
}

double sequence_score(const ScoreLattice& lat, std::span<const int> y) {
  if (static_cast<int>(y.size()) != lat.length()) throw Error("label sequence length mismatch");
  const int k = lat.labels();
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= k) throw Error("label index out of range");
    s += lat.S(static_cast<Eigen::Index>(i), y[i]);
    if (i > 0) s += lat.T(y[i - 1], y[i]);
  }
  return s + lat.start[y.front()] + lat.end[y.back()];
}

double log_partition(const ScoreLattice& lat) {
  lat.validate();
  const Matrix alpha = forward_scores(lat);
  return logsumexp(alpha.row(lat.length() - 1) + lat.end.transpose());
}

CrfGradient nll_and_grad(const ScoreLattice& lat, std::span<const int> gold) {
  lat.validate();
  const int n = lat.length();
  const int k = lat.labels();
  if (static_cast<int>(gold.size()) != n) throw Error("gold sequence length mismatch");
  for (int y : gold) {
    if (y < 0 || y >= k) throw Error("gold label index " + std::to_string(y) + " out of range");
  }
  const Matrix alpha = forward_scores(lat);
  const Matrix beta = backward_scores(lat);
  const double log_z = logsumexp(alpha.row(n - 1) + lat.end.transpose());

  CrfGradient g;
  g.loss = std::max(0.0, log_z - sequence_score(lat, gold));
  g.dS = (alpha + beta).array() - log_z;
  g.dS = g.dS.array().exp();
  g.dT = Matrix::Zero(k, k);
  for (int i = 1; i < n; ++i) {
    // P(y_{i-1} = p, y_i = j)
    const RowVector right = lat.S.row(i) + beta.row(i);
    for (int p = 0; p < k; ++p) {
      g.dT.row(p).array() += (alpha(i - 1, p) + lat.T.row(p).array() + right.array() - log_z).exp();
    }
  }
  g.dstart = g.dS.row(0).transpose();
  g.dend = g.dS.row(n - 1).transpose();
  for (int i = 0; i < n; ++i) {
    const int y = gold[static_cast<std::size_t>(i)];
    g.dS(i, y) -= 1.0;
    if (i > 0) g.dT(gold[static_cast<std::size_t>(i - 1)], y) -= 1.0;
  }
  g.dstart[gold.front()] -= 1.0;
  g.dend[gold.back()] -= 1.0;
  return g;
}

TransitionMask TransitionMask::from(const LabelSpace& space) {
  const int k = space.size();
  TransitionMask m{Matrix::Zero(k, k), Vector::Zero(k), Vector::Zero(k)};
  for (int i = 0; i < k; ++i) {
    if (!space.allowed_start(i)) m.start[i] = kNegInf;
    if (!space.allowed_end(i)) m.end[i] = kNegInf;
    for (int j = 0; j < k; ++j) {
      if (!space.allowed_transition(i, j)) m.transition(i, j) = kNegInf;
    }
  }
  return m;
}

std::vector<int> viterbi(const ScoreLattice& lat) { return viterbi_impl(lat, nullptr); }

std::vector<int> viterbi(const ScoreLattice& lat, const TransitionMask& mask) {
  if (mask.transition.rows() != lat.labels()) throw Error("transition mask does not match the lattice");
  auto path = viterbi_impl(lat, &mask);
  if (path.empty()) return viterbi_impl(lat, nullptr);
  return path;
}

std::vector<int> viterbi(const ScoreLattice& lat, const LabelSpace& space) {
  if (space.size() != lat.labels()) throw Error("label space does not match the lattice");
  return viterbi(lat, TransitionMask::from(space));
}

ScoreLattice average_lattices(std::span<const ScoreLattice> lats) {
  if (lats.empty()) throw Error("cannot average zero lattices");
  ScoreLattice avg = lats.front();
  for (std::size_t m = 1; m < lats.size(); ++m) {
    const auto& l = lats[m];
    if (l.S.rows() != avg.S.rows() || l.S.cols() != avg.S.cols()) throw Error("lattice shapes differ");
    avg.S += l.S;
    avg.T += l.T;
    avg.start += l.start;
    avg.end += l.end;
  }
  const double inv = 1.0 / static_cast<double>(lats.size());
  avg.S *= inv;
  avg.T *= inv;
  avg.start *= inv;
  avg.end *= inv;
  return avg;
}

}  // namespace jseg
