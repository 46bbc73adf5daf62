#pragma once

#include <span>
#include <vector>

#include "jseg/common.hpp"
#include "jseg/labels.hpp"

namespace jseg {

/// Scores of one sentence: emissions S[i, j] for label j at position i,
/// transitions T[from, to], and boundary scores for the first/last label.
struct ScoreLattice {
  Matrix S;      // n x k
  Matrix T;      // k x k
  Vector start;  // k
  Vector end;    // k

  int length() const { return static_cast<int>(S.rows()); }
  int labels() const { return static_cast<int>(S.cols()); }
  void validate() const;
};

struct CrfParams {
  Matrix W;  // input x k
  Vector b;  // k
  Matrix T;  // k x k
  Vector start;
  Vector end;

  static CrfParams zeros(int input, int k);
  int labels() const { return static_cast<int>(T.rows()); }
};

/// S = H W + b.
Matrix emissions(const Matrix& H, const CrfParams& p);

/// Total score of one label sequence.
double sequence_score(const ScoreLattice& lat, std::span<const int> labels);

/// log of the sum over every label sequence of exp(score), by the forward
/// recursion in log space.
double log_partition(const ScoreLattice& lat);

struct CrfGradient {
  double loss = 0.0;
  Matrix dS;
  Matrix dT;
  Vector dstart;
  Vector dend;
};

/// Negative log-likelihood of `gold` and its gradient w.r.t. every score,
/// from forward-backward marginals.
CrfGradient nll_and_grad(const ScoreLattice& lat, std::span<const int> gold);

/// Additive penalties (0 or -inf) that forbid ill-formed BIES sequences:
/// an open word (B/I) must continue with I/E of the same POS, a closed word
/// (E/S) must be followed by B/S, and sequences start with B/S and end with
/// E/S.
struct TransitionMask {
  Matrix transition;  // k x k
  Vector start;
  Vector end;

  static TransitionMask from(const LabelSpace& space);
};

/// Highest-scoring sequence over all k^n sequences. Ties go to the lower
/// label index.
std::vector<int> viterbi(const ScoreLattice& lat);

/// Highest-scoring well-formed sequence. If the label space admits no
/// well-formed sequence of this length the unmasked optimum is returned.
std::vector<int> viterbi(const ScoreLattice& lat, const TransitionMask& mask);
std::vector<int> viterbi(const ScoreLattice& lat, const LabelSpace& space);

/// Element-wise mean of emissions, transitions and boundary scores.
ScoreLattice average_lattices(std::span<const ScoreLattice> lattices);

}  // namespace jseg
