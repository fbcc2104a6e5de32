#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fairgrade/types.hpp"

namespace fairgrade::attn {

struct ModelConfig {
  int max_frames = 1200;  // sequences clip/pad to this length
  int embed_dim = 256;    // per-frame face embedding size
  int proj_dim = 64;      // embedding down-projection
  int ff_channels = 23;   // facial channels appended after projection
  int kernel = 10;
  int stride = 5;
  int heads = 3;
  int head_dim = 29;
  int prosody_dim = 64;   // h_p length
  int head_hidden = 64;
  double face_confidence = 0.75;
  double min_coverage = 0.7;
  double dropout = 0.45;
  double bn_epsilon = 1e-5;
  /// Additive attention: one softmax over time per feature column (default)
  /// or a single shared distribution over time.
  bool additive_per_feature = true;

  int stream_dim() const { return proj_dim + ff_channels; }
  int conv_out() const { return (max_frames - kernel) / stride + 1; }
  int concat_dim() const { return stream_dim() + prosody_dim; }
  void validate() const;
};

struct HeadParams {
  Eigen::MatrixXd q_w, k_w, v_w;  // head_dim x stream_dim
  Eigen::VectorXd q_b, k_b, v_b;  // head_dim
};

/// All trainable tensors. The flat order is fixed: down projection, conv,
/// batch-norm, per-head q/k/v, attention output projection, additive
/// attention, head layers; matrices are row-major within each block.
struct Parameters {
  Eigen::MatrixXd down_w;       // proj_dim x embed_dim
  Eigen::VectorXd down_b;       // proj_dim
  Eigen::MatrixXd conv_w;       // stream_dim x kernel (depthwise filters)
  Eigen::VectorXd conv_b;       // stream_dim
  Eigen::VectorXd bn_gamma;     // stream_dim
  Eigen::VectorXd bn_beta;      // stream_dim
  std::vector<HeadParams> heads;
  Eigen::MatrixXd attn_out_w;   // stream_dim x (heads * head_dim)
  Eigen::VectorXd attn_out_b;   // stream_dim
  Eigen::MatrixXd add_w;        // conv_out x conv_out
  Eigen::VectorXd add_b;        // conv_out
  Eigen::MatrixXd head1_w;      // head_hidden x concat_dim
  Eigen::VectorXd head1_b;      // head_hidden
  Eigen::MatrixXd head2_w;      // 1 x head_hidden
  Eigen::VectorXd head2_b;      // 1

  static Parameters zeros(const ModelConfig& cfg);
  std::size_t count() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);
};

struct BatchNormState {
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
};

struct Model {
  ModelConfig config;
  Parameters params;
  BatchNormState bn;

  /// Glorot-uniform weights, zero biases, identity batch-norm.
  static Model init(const ModelConfig& cfg, std::uint64_t seed);
};

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

/// Imputed, clipped per-video inputs; parameter-free so they can be cached.
struct VideoInput {
  std::string video_id;
  Eigen::MatrixXd embeddings;  // embed_dim x T (invalid frames imputed)
  Eigen::MatrixXd ff;          // ff_channels x T
  Eigen::VectorXd prosody;     // prosody_dim
  bool accepted = true;
};

/// Builds the model input from a record: frames with face confidence below
/// the threshold are imputed (interior: mean of nearest valid neighbours;
/// edges: nearest valid frame); accepted = false when the valid fraction is
/// below min_coverage. Throws LengthMismatch on inconsistent lengths.
/// h_p is the projected prosody vector (zeros in the two-argument form).
VideoInput preprocess(const VideoRecord& rec, const ModelConfig& cfg);
VideoInput preprocess(const VideoRecord& rec, const ModelConfig& cfg,
                      const Eigen::VectorXd& h_p);

struct PaddedStream {
  Eigen::MatrixXd stream;  // stream_dim x max_frames, zero-padded
  bool accepted = true;
};

/// The projected + concatenated + padded input matrix for one video.
PaddedStream impute_and_pad(const VideoRecord& rec, const Model& model);

// ---------------------------------------------------------------------------
// Layer primitives (exposed for direct testing)
// ---------------------------------------------------------------------------

/// Depthwise valid convolution of the padded stream; stream_dim x conv_out.
Eigen::MatrixXd conv_downsample(const Eigen::MatrixXd& stream,
                                const Parameters& params,
                                const ModelConfig& cfg);

/// Multi-head self-attention over a time-major sequence (conv_out rows,
/// stream_dim columns); output has the same shape.
Eigen::MatrixXd self_attention(const Eigen::MatrixXd& x,
                               const Parameters& params,
                               const ModelConfig& cfg);

/// Additive attention pooling over time; returns the stream_dim summary.
Eigen::VectorXd additive_attention(const Eigen::MatrixXd& h,
                                   const Eigen::MatrixXd& w,
                                   const Eigen::VectorXd& b,
                                   bool per_feature = true);

// ---------------------------------------------------------------------------
// Forward / backward / optimization
// ---------------------------------------------------------------------------

enum class Mode { Train, Eval };

struct ForwardCache;  // opaque; defined in the implementation

struct BatchResult {
  Eigen::VectorXd predictions;  // input order
  std::shared_ptr<ForwardCache> cache;
};

/// Runs the full pipeline for a batch. Train mode uses batch statistics for
/// batch-norm and applies dropout (masks derived from dropout_seed); videos
/// are processed in video_id order so results do not depend on batch order.
/// Throws RejectedVideo if an input has accepted = false.
BatchResult forward_batch(const Model& model,
                          const std::vector<VideoInput>& batch, Mode mode,
                          std::uint64_t dropout_seed = 0);

double forward_one(const Model& model, const VideoInput& input, Mode mode);

/// MSE + l2 * ||theta||^2 under the exact same dropout masks as
/// forward_batch with the given seed.
double batch_loss(const Model& model, const std::vector<VideoInput>& batch,
                  const Eigen::VectorXd& targets, Mode mode,
                  std::uint64_t dropout_seed, double l2);

/// Analytic gradient of batch_loss in train mode w.r.t. every parameter.
Parameters backward_batch(const Model& model,
                          const std::vector<VideoInput>& batch,
                          const Eigen::VectorXd& targets,
                          const BatchResult& forward, double l2);

struct NAdamConfig {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct NAdamState {
  Eigen::VectorXd m;  // first moment
  Eigen::VectorXd v;  // second moment
  long step = 0;

  static NAdamState zeros(std::size_t n);
};

/// One NAdam update (bias-corrected moments, Nesterov look-ahead on the
/// first moment). Throws NonFiniteGradient on non-finite gradients.
void nadam_step(Eigen::VectorXd& theta, NAdamState& state,
                const Eigen::VectorXd& grad, const NAdamConfig& cfg);

struct TrainConfig {
  NAdamConfig opt;
  double l2 = 0.0005;
  double dropout = 0.45;
  int batch_size = 8;
  int max_epochs = 100;
  int patience = 10;
  double bn_momentum = 0.9;
  std::uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double val_r = 0.0;
};

struct TrainResult {
  Model model;  // best-validation checkpoint
  std::vector<EpochStats> history;
  int best_epoch = 0;
};

/// Mini-batch NAdam with early stopping on validation loss. Fully seeded:
/// shuffling, dropout and (via Model::init) the initial weights.
TrainResult train(Model model, const std::vector<VideoInput>& train_set,
                  const Eigen::VectorXd& train_y,
                  const std::vector<VideoInput>& val_set,
                  const Eigen::VectorXd& val_y, const TrainConfig& cfg);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace fairgrade::attn
