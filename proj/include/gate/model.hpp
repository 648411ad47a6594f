#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gate/neighbors.hpp"
#include "gate/params.hpp"
#include "gate/ratings.hpp"
#include "gate/tensor.hpp"
#include "gate/text.hpp"

namespace gate {

enum class AttentionMode { kMultiDim, kVanilla };
// Model variants: stacked AE alone, AE + word attention fused by the gate,
// and the full model with neighbor attention.
enum class Ablation { kAeOnly, kAeWordGate, kFull };
enum class NeighborGrad { kFlow, kStop };
enum class OutputActivation { kTanh, kSigmoid };

std::string to_string(AttentionMode m);
std::string to_string(Ablation a);
std::string to_string(NeighborGrad g);
std::string to_string(OutputActivation a);
AttentionMode parse_attention_mode(const std::string& s);
Ablation parse_ablation(const std::string& s);
NeighborGrad parse_neighbor_grad(const std::string& s);
OutputActivation parse_output_activation(const std::string& s);

struct ModelHyper {
  std::size_t num_users = 0;   // m
  std::size_t num_items = 0;   // n
  std::size_t vocab_size = 0;  // v, including the reserved ids
  std::size_t h1 = 100;
  std::size_t h = 50;  // bottleneck width, also the word embedding width
  std::size_t d_a = 20;
  std::size_t max_len = 300;
  double rho = 5.0;
  double lambda = 0.001;
  AttentionMode attention = AttentionMode::kMultiDim;
  Ablation ablation = Ablation::kFull;
  NeighborGrad neighbor_grad = NeighborGrad::kFlow;
  OutputActivation output = OutputActivation::kTanh;

  bool uses_content() const { return ablation != Ablation::kAeOnly; }
  bool uses_neighbors() const { return ablation == Ablation::kFull; }
  // Throws ConfigError on rho <= 1, zero widths, negative lambda, or missing data sizes.
  void validate() const;
};

// Parameter slot names.
namespace slot {
inline constexpr const char* W1 = "W1";
inline constexpr const char* b1 = "b1";
inline constexpr const char* W2 = "W2";
inline constexpr const char* b2 = "b2";
inline constexpr const char* W3 = "W3";
inline constexpr const char* b3 = "b3";
inline constexpr const char* W4 = "W4";
inline constexpr const char* b4 = "b4";
inline constexpr const char* E = "E";
inline constexpr const char* Wa1 = "Wa1";
inline constexpr const char* ba1 = "ba1";
inline constexpr const char* Wa2 = "Wa2";
inline constexpr const char* ba2 = "ba2";
inline constexpr const char* wt = "wt";
inline constexpr const char* wa1 = "wa1";  // vanilla attention query vector
inline constexpr const char* Wg1 = "Wg1";
inline constexpr const char* Wg2 = "Wg2";
inline constexpr const char* bg = "bg";
inline constexpr const char* Wn = "Wn";
}  // namespace slot

// Slots (with shapes) required by `hp`, in name order.
std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> parameter_layout(const ModelHyper& hp);
// Slots that enter the L2 penalty: every weight matrix and the aggregation vector.
bool is_regularized(const std::string& slot_name);

// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
ParameterSet init_parameters(const ModelHyper& hp, std::uint64_t seed);
// Throws ConfigError if `params` does not hold exactly the slots/shapes `hp` needs.
void check_parameters(const ModelHyper& hp, const ParameterSet& params);

// ---- Single-item operations -------------------------------------------------------

struct RatingEncoding {
  Vector z1;  // first hidden layer
  Vector zr;  // rating hidden representation
};

// z1 = tanh(W1 r + b1); zr = tanh(W2 z1 + b2).
RatingEncoding encode_ratings(std::span<const double> r, const ParameterSet& params);
// Same, for a binary column given by its nonzero rows.
RatingEncoding encode_rating_ids(std::span<const Id> raters, const ParameterSet& params);

struct WordAttention {
  Matrix attention;  // d_a x l (1 x l for vanilla); padded columns are exactly 0
  Matrix pooled;     // Z_c = A D^T, d_a x h (1 x h for vanilla)
  Vector zc;         // content hidden representation
};

// Multi-dimensional attention: A = softmax_rows(Wa1 tanh(Wa2 D + ba2) + ba1) with padding
// masked out, Z_c = A D^T, zc = tanh(Z_c^T wt). kPadToken entries are padding.
WordAttention word_attention_multi(std::span<const Id> tokens, const ParameterSet& params);
// Single-query attention: a = softmax(wa1^T tanh(Wa2 D + ba2)), zc = D a.
WordAttention word_attention_vanilla(std::span<const Id> tokens, const ParameterSet& params);

struct GateFusion {
  Vector gate;  // G
  Vector zg;    // G * zr + (1 - G) * zc
};

GateFusion gate_fuse(std::span<const double> zr, std::span<const double> zc, const ParameterSet& params);

struct NeighborAttention {
  Vector scores;   // s_ij = tanh(zg_i^T Wn zg_j)
  Vector weights;  // softmax(scores)
  Vector zn;       // sum_j a_ij zg_j; zero when there are no neighbors
};

NeighborAttention neighbor_attention(std::span<const double> zg_target,
                                     const std::vector<std::span<const double>>& zg_neighbors,
                                     const ParameterSet& params);

struct Decoded {
  Vector z3g;  // hidden layer of the item branch
  Vector z3n;  // hidden layer of the neighbor branch (empty unless full)
  Vector r_hat;
};

// Full: r_hat = a4(W4 tanh(W3 zg + b3) + W4 tanh(W3 zn + b3) + b4).
// Ablations: r_hat = a4(W4 tanh(W3 z + b3) + b4), with `zn` ignored.
Decoded decode(std::span<const double> z, std::span<const double> zn, const ParameterSet& params,
               Ablation ablation, OutputActivation output = OutputActivation::kTanh);

// sum_u (C_u (r_u - r_hat_u))^2 with C_u = rho if r_u = 1 else 1.
double weighted_loss(std::span<const double> r_hat, std::span<const double> r, double rho);
// lambda * (sum of squared weight-matrix entries + ||wt||^2).
double regularizer(const ParameterSet& params, double lambda);
double weighted_loss(std::span<const double> r_hat, std::span<const double> r, double rho,
                     const ParameterSet& params, double lambda);

// ---- Batched forward / backward ---------------------------------------------------

// Read-only data the model consumes. `ratings` supplies r_i columns (training pairs).
struct ModelData {
  const SparseBinaryRatings* ratings = nullptr;
  const ItemCorpus* corpus = nullptr;
  const NeighborGraph* graph = nullptr;  // required for Ablation::kFull
};

// Attention pre-softmax scores depend only on the token, so they are computed once per
// vocabulary entry: tanh_act.row(t) = tanh(Wa2 e_t + ba2), scores.row(t) = Wa1 that + ba1.
struct TokenScores {
  Matrix tanh_act;  // v x h
  Matrix scores;    // v x d_a (v x 1 for vanilla)
};

TokenScores compute_token_scores(const ModelHyper& hp, const ParameterSet& params);

struct ItemEncoding {
  Id item = 0;
  Vector z1, zr, zc, gate, zg;  // zg == zr when content is disabled
};

struct TargetOutput {
  Id item = 0;
  std::vector<Id> neighbors;
  NeighborAttention neighbor;
  Decoded decoded;
};

struct ForwardOptions {
  // When set, encodings used in the neighbor role come from these parameters instead.
  // Used to express the stop-gradient objective for finite-difference checking.
  const ParameterSet* neighbor_params = nullptr;
};

struct ForwardTrace {
  std::vector<Id> batch;
  std::vector<Id> closure;  // batch plus neighbors, sorted
  std::unordered_map<Id, std::size_t> closure_index;
  std::vector<ItemEncoding> encodings;  // aligned with closure
  std::vector<TargetOutput> outputs;    // aligned with batch
  TokenScores tokens;
};

ForwardTrace forward(const ModelHyper& hp, const ParameterSet& params, const ModelData& data,
                     std::span<const Id> batch, const ForwardOptions& opts = {});

// Data term over the batch plus the regularizer.
double batch_objective(const ModelHyper& hp, const ParameterSet& params, const ModelData& data,
                       const ForwardTrace& trace);

// Analytic gradients of batch_objective for every slot.
Gradients backward(const ModelHyper& hp, const ParameterSet& params, const ModelData& data,
                   const ForwardTrace& trace);

// Forward + objective, honoring the stop-gradient semantics via `frozen` when given.
double objective(const ModelHyper& hp, const ParameterSet& params, const ModelData& data,
                 std::span<const Id> batch, const ParameterSet* frozen = nullptr);

}  // namespace gate
