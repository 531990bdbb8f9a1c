#ifndef FES_NEURALREG_HPP
#define FES_NEURALREG_HPP

#include "fes/clustering.hpp"
#include "fes/imputation.hpp"
#include "fes/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace fes {

/// Feed-forward net shape and training knobs. Hidden layers use sigmoid,
/// the single output is linear, cost is mean squared error.
struct MlpSpec {
  std::vector<Index> layer_sizes;  // input, hidden..., 1; input 0 = sized later
  double lr = 0.01;
  double momentum = 0.9;
  Index batch = 0;  // 0 = full batch
  Index max_epochs = 50;
  double min_gradient = 1e-5;  // L2 norm of the full-batch gradient
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

/// Per-query stage: four small nets, trained online, kept cheap.
inline MlpSpec default_s1_spec(std::uint64_t seed, Index input_size = 0) {
  MlpSpec s;
  s.layer_sizes = {input_size, 32, 16, 1};
  s.batch = 0;
  s.max_epochs = 50;
  s.min_gradient = 1e-5;
  s.seed = seed;
  return s;
}

/// Fusion stage: one net trained offline on stage-1 outputs.
inline MlpSpec default_s2_spec(std::uint64_t seed) {
  MlpSpec s;
  s.layer_sizes = {4, 8, 8, 1};
  s.batch = 100;
  s.max_epochs = 5000;
  s.min_gradient = 1e-7;
  s.seed = seed;
  return s;
}

/// Min-max map to [0,1]. A constant feature scales to 0 and de-scales back
/// to the constant, so degenerate columns cannot poison training.
struct MinMaxScaler {
  double lo = 0.0;
  double hi = 1.0;
  bool constant = false;

  static MinMaxScaler fit(const Vector& data);
  double scale(double x) const { return constant ? 0.0 : (x - lo) / (hi - lo); }
  double descale(double y) const { return constant ? lo : lo + y * (hi - lo); }
};

struct TrainedMlp {
  std::vector<Matrix> weights;  // per layer, (out x in)
  std::vector<Vector> biases;
  std::vector<MinMaxScaler> input_scalers;
  MinMaxScaler target_scaler;
  MlpSpec spec;
  Index epochs_run = 0;

  /// Scale features, run the net, de-scale the output.
  double predict(const Vector& raw_features) const;
};

/// Loss and analytic gradient of the MSE cost at the given parameters over
/// scaled samples; exposed so the backprop can be checked against finite
/// differences.
struct MlpGradient {
  std::vector<Matrix> dw;
  std::vector<Vector> db;
  double loss = 0.0;

  double norm() const;
};

MlpGradient mlp_loss_gradient(const std::vector<Matrix>& weights,
                              const std::vector<Vector>& biases, const Matrix& x,
                              const Vector& y);

/// Network outputs (linear) for each row of x, parameters as-is, no scaling.
Vector mlp_forward(const std::vector<Matrix>& weights,
                   const std::vector<Vector>& biases, const Matrix& x);

/// Fit by gradient descent with momentum: full-batch when spec.batch is 0,
/// else shuffled mini-batches. Stops when the full-batch gradient norm drops
/// under spec.min_gradient or max_epochs is reached. Scalers are fit on the
/// given data and stored. Non-finite parameters abort with the failing epoch.
TrainedMlp train_mlp(const MlpSpec& spec, const Matrix& samples, const Vector& targets);

/// Train one fresh net per filled matrix (rows other than the target user as
/// samples, the target service's column as labels) and predict the target
/// row. Returns the four de-scaled predictions in quad order. feature_cap > 0
/// restricts very wide matrices to the cap-many columns most similar to the
/// target column; 0 leaves them untouched.
std::array<double, 4> nregs1_predict(const FilledQuad& quad, Index user, Index service,
                                     const MlpSpec& spec, Index feature_cap = 0);

struct FusedModel {
  TrainedMlp s2;
  MlpSpec spec1;  // stage-1 config its training inputs were produced with
  Index feature_cap = 0;
  std::uint64_t forest_hash = 0;
  Index trained_on = 0;  // |TrD_S2|
};

struct S2TrainingSet {
  Matrix features;  // n x 4, stage-1 outputs
  Vector targets;   // true QoS
  IndexedCells pairs;  // sampled (user, service, truth), in draw order
  bool exhausted = false;  // fewer valid pairs existed than were requested
};

/// Draw up to n keys round-robin across pre-shuffled buckets, skipping keys
/// already taken (a pair belongs to one bucket per forest). Draw order is the
/// emission order.
std::vector<std::uint64_t> round_robin_draw(
    const std::vector<std::vector<std::uint64_t>>& buckets, Index n);

/// Sample training pairs uniformly across the multi-level clusters of both
/// forests, run stage-1 on each, and pair the four outputs with the true
/// value from the training matrix.
S2TrainingSet build_s2_training_set(const QosMatrix& train,
                                    const PreprocessedStore& store,
                                    const ForestPair& forests, Index n_samples,
                                    const MlpSpec& spec1, std::uint64_t seed,
                                    Index feature_cap = 0);

FusedModel train_s2(const Matrix& features, const Vector& targets, const MlpSpec& spec2,
                    std::uint64_t forest_hash);

/// Full fused inference for one pair: online stage-1 over the quad, then the
/// frozen stage-2. Optionally reports the intermediate stage-1 vector.
double fused_predict(const FusedModel& model, const FilledQuad& quad, Index user,
                     Index service, std::array<double, 4>* stage1_out = nullptr);

void save_model(const std::filesystem::path& file, const FusedModel& model);
FusedModel load_model(const std::filesystem::path& file);
/// Load and require the model to match the store it will serve.
FusedModel load_model(const std::filesystem::path& file,
                      std::uint64_t expected_forest_hash);

}  // namespace fes

#endif  // FES_NEURALREG_HPP
