#include "fairgrade/attention.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "fairgrade/io.hpp"
#include "fairgrade/rng.hpp"
#include "fairgrade/stats.hpp"

namespace fairgrade::attn {

using nlohmann::json;

void ModelConfig::validate() const {
  require(max_frames >= kernel && kernel >= 1 && stride >= 1,
          Cond::InvalidConfig, "conv geometry invalid");
  require(embed_dim >= 1 && proj_dim >= 1 && ff_channels >= 1,
          Cond::InvalidConfig, "stream dimensions must be positive");
  require(heads >= 1 && head_dim >= 1, Cond::InvalidConfig,
          "attention head shape invalid");
  require(prosody_dim >= 1 && head_hidden >= 1, Cond::InvalidConfig,
          "head dimensions must be positive");
  require(dropout >= 0.0 && dropout < 1.0, Cond::InvalidConfig,
          "dropout must be in [0, 1)");
  require(face_confidence >= 0.0 && face_confidence <= 1.0 &&
              min_coverage > 0.0 && min_coverage <= 1.0,
          Cond::InvalidConfig, "confidence thresholds invalid");
}

// ---------------------------------------------------------------------------
// Parameter plumbing
// ---------------------------------------------------------------------------

namespace {

template <typename P, typename F>
void visit_params(P& p, F&& f) {
  f(p.down_w);
  f(p.down_b);
  f(p.conv_w);
  f(p.conv_b);
  f(p.bn_gamma);
  f(p.bn_beta);
  for (auto& h : p.heads) {
    f(h.q_w);
    f(h.q_b);
    f(h.k_w);
    f(h.k_b);
    f(h.v_w);
    f(h.v_b);
  }
  f(p.attn_out_w);
  f(p.attn_out_b);
  f(p.add_w);
  f(p.add_b);
  f(p.head1_w);
  f(p.head1_b);
  f(p.head2_w);
  f(p.head2_b);
}

}  // namespace

Parameters Parameters::zeros(const ModelConfig& cfg) {
  Parameters p;
  const int s = cfg.stream_dim();
  p.down_w = Eigen::MatrixXd::Zero(cfg.proj_dim, cfg.embed_dim);
  p.down_b = Eigen::VectorXd::Zero(cfg.proj_dim);
  p.conv_w = Eigen::MatrixXd::Zero(s, cfg.kernel);
  p.conv_b = Eigen::VectorXd::Zero(s);
  p.bn_gamma = Eigen::VectorXd::Zero(s);
  p.bn_beta = Eigen::VectorXd::Zero(s);
  p.heads.resize(cfg.heads);
  for (auto& h : p.heads) {
    h.q_w = Eigen::MatrixXd::Zero(cfg.head_dim, s);
    h.k_w = Eigen::MatrixXd::Zero(cfg.head_dim, s);
    h.v_w = Eigen::MatrixXd::Zero(cfg.head_dim, s);
    h.q_b = Eigen::VectorXd::Zero(cfg.head_dim);
    h.k_b = Eigen::VectorXd::Zero(cfg.head_dim);
    h.v_b = Eigen::VectorXd::Zero(cfg.head_dim);
  }
  p.attn_out_w = Eigen::MatrixXd::Zero(s, cfg.heads * cfg.head_dim);
  p.attn_out_b = Eigen::VectorXd::Zero(s);
  p.add_w = Eigen::MatrixXd::Zero(cfg.conv_out(), cfg.conv_out());
  p.add_b = Eigen::VectorXd::Zero(cfg.conv_out());
  p.head1_w = Eigen::MatrixXd::Zero(cfg.head_hidden, cfg.concat_dim());
  p.head1_b = Eigen::VectorXd::Zero(cfg.head_hidden);
  p.head2_w = Eigen::MatrixXd::Zero(1, cfg.head_hidden);
  p.head2_b = Eigen::VectorXd::Zero(1);
  return p;
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  visit_params(*this, [&n](const auto& t) { n += t.size(); });
  return n;
}

Eigen::VectorXd Parameters::flatten() const {
  Eigen::VectorXd flat(count());
  std::size_t offset = 0;
  visit_params(*this, [&](const auto& t) {
    flat.segment(offset, t.size()) =
        Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
    offset += t.size();
  });
  return flat;
}

void Parameters::unflatten(const Eigen::VectorXd& flat) {
  require(flat.size() == static_cast<Eigen::Index>(count()),
          Cond::ShapeMismatch, "flat parameter size ", flat.size(),
          " != ", count());
  std::size_t offset = 0;
  visit_params(*this, [&](auto& t) {
    Eigen::Map<Eigen::VectorXd>(t.data(), t.size()) =
        flat.segment(offset, t.size());
    offset += t.size();
  });
}

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.config = cfg;
  m.params = Parameters::zeros(cfg);
  Rng rng(derive_seed(seed, 0xA77E));

  auto glorot = [&rng](Eigen::MatrixXd& w, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (int i = 0; i < w.rows(); ++i) {
      for (int j = 0; j < w.cols(); ++j) {
        w(i, j) = rng.uniform(-limit, limit);
      }
    }
  };
  const int s = cfg.stream_dim();
  glorot(m.params.down_w, cfg.embed_dim, cfg.proj_dim);
  glorot(m.params.conv_w, cfg.kernel, 1);
  for (auto& h : m.params.heads) {
    glorot(h.q_w, s, cfg.head_dim);
    glorot(h.k_w, s, cfg.head_dim);
    glorot(h.v_w, s, cfg.head_dim);
  }
  glorot(m.params.attn_out_w, cfg.heads * cfg.head_dim, s);
  glorot(m.params.add_w, cfg.conv_out(), cfg.conv_out());
  glorot(m.params.head1_w, cfg.concat_dim(), cfg.head_hidden);
  glorot(m.params.head2_w, cfg.head_hidden, 1);
  m.params.bn_gamma.setOnes();

  m.bn.running_mean = Eigen::VectorXd::Zero(s);
  m.bn.running_var = Eigen::VectorXd::Ones(s);
  return m;
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

VideoInput preprocess(const VideoRecord& rec, const ModelConfig& cfg) {
  return preprocess(rec, cfg, Eigen::VectorXd::Zero(cfg.prosody_dim));
}

VideoInput preprocess(const VideoRecord& rec, const ModelConfig& cfg,
                      const Eigen::VectorXd& h_p) {
  const std::size_t t_raw = rec.frames.frame_count();
  require(rec.has_embeddings(), Cond::LengthMismatch, "video ", rec.video_id,
          " has no embeddings");
  require(rec.embeddings.size() == t_raw, Cond::LengthMismatch,
          "embeddings cover ", rec.embeddings.size(), " of ", t_raw,
          " frames");
  require(static_cast<int>(rec.embeddings.front().size()) == cfg.embed_dim,
          Cond::ShapeMismatch, "embedding dim ",
          rec.embeddings.front().size(), " != ", cfg.embed_dim);
  require(cfg.ff_channels <= kNumChannels, Cond::ShapeMismatch,
          "ff_channels exceeds available channels");
  require(h_p.size() == cfg.prosody_dim, Cond::ShapeMismatch,
          "prosody dim ", h_p.size(), " != ", cfg.prosody_dim);

  const int t = static_cast<int>(std::min<std::size_t>(t_raw, cfg.max_frames));
  VideoInput input;
  input.video_id = rec.video_id;
  input.prosody = h_p;

  std::vector<int> valid;
  for (int i = 0; i < t; ++i) {
    if (rec.frames.face_confidence[i] > cfg.face_confidence) valid.push_back(i);
  }
  const double coverage = static_cast<double>(valid.size()) / t;
  input.accepted = !valid.empty() && coverage >= cfg.min_coverage;

  input.embeddings.resize(cfg.embed_dim, t);
  for (int i = 0; i < t; ++i) input.embeddings.col(i) = rec.embeddings[i];
  if (!valid.empty() && static_cast<int>(valid.size()) < t) {
    // Interior gaps take the mean of the nearest valid frame on each side;
    // leading/trailing gaps copy the nearest valid frame.
    for (int i = 0; i < t; ++i) {
      if (rec.frames.face_confidence[i] > cfg.face_confidence) continue;
      const auto right = std::lower_bound(valid.begin(), valid.end(), i);
      if (right == valid.begin()) {
        input.embeddings.col(i) = rec.embeddings[*right];
      } else if (right == valid.end()) {
        input.embeddings.col(i) = rec.embeddings[*(right - 1)];
      } else {
        input.embeddings.col(i) =
            0.5 * (rec.embeddings[*(right - 1)] + rec.embeddings[*right]);
      }
    }
  }

  input.ff.resize(cfg.ff_channels, t);
  for (int c = 0; c < cfg.ff_channels; ++c) {
    for (int i = 0; i < t; ++i) {
      input.ff(c, i) = rec.frames.channels[c][i];
    }
  }
  return input;
}

namespace {

Eigen::MatrixXd project_and_pad(const VideoInput& input,
                                const Parameters& params,
                                const ModelConfig& cfg) {
  const int t = static_cast<int>(input.embeddings.cols());
  Eigen::MatrixXd stream =
      Eigen::MatrixXd::Zero(cfg.stream_dim(), cfg.max_frames);
  stream.topLeftCorner(cfg.proj_dim, t) =
      (params.down_w * input.embeddings).colwise() + params.down_b;
  stream.block(cfg.proj_dim, 0, cfg.ff_channels, t) = input.ff;
  return stream;
}

}  // namespace

PaddedStream impute_and_pad(const VideoRecord& rec, const Model& model) {
  const VideoInput input = preprocess(rec, model.config);
  PaddedStream out;
  out.accepted = input.accepted;
  out.stream = project_and_pad(input, model.params, model.config);
  return out;
}

// ---------------------------------------------------------------------------
// Layer primitives
// ---------------------------------------------------------------------------

Eigen::MatrixXd conv_downsample(const Eigen::MatrixXd& stream,
                                const Parameters& params,
                                const ModelConfig& cfg) {
  require(stream.rows() == cfg.stream_dim() &&
              stream.cols() == cfg.max_frames,
          Cond::ShapeMismatch, "conv input is ", stream.rows(), "x",
          stream.cols(), ", expected ", cfg.stream_dim(), "x", cfg.max_frames);
  const int out_len = cfg.conv_out();
  Eigen::MatrixXd out(cfg.stream_dim(), out_len);
  for (int c = 0; c < cfg.stream_dim(); ++c) {
    for (int j = 0; j < out_len; ++j) {
      double acc = params.conv_b[c];
      const int base = j * cfg.stride;
      for (int k = 0; k < cfg.kernel; ++k) {
        acc += params.conv_w(c, k) * stream(c, base + k);
      }
      out(c, j) = acc;
    }
  }
  return out;
}

namespace {

/// Row-wise softmax, numerically stabilized.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd out(z.rows(), z.cols());
  for (int r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    out.row(r) = (z.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Eigen::VectorXd softmax_vec(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - m).exp();
  return e / e.sum();
}

struct AttentionHeadCache {
  Eigen::MatrixXd q, k, v, a, o;
};

struct SelfAttentionCache {
  std::vector<AttentionHeadCache> heads;
  Eigen::MatrixXd concat;  // conv_out x heads*head_dim
  Eigen::MatrixXd h;       // conv_out x stream_dim
};

SelfAttentionCache self_attention_cached(const Eigen::MatrixXd& x,
                                         const Parameters& params,
                                         const ModelConfig& cfg) {
  SelfAttentionCache cache;
  const int t = static_cast<int>(x.rows());
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
  cache.concat.resize(t, cfg.heads * cfg.head_dim);
  for (int h = 0; h < cfg.heads; ++h) {
    AttentionHeadCache hc;
    const auto& hp = params.heads[h];
    hc.q = (x * hp.q_w.transpose()).rowwise() + hp.q_b.transpose();
    hc.k = (x * hp.k_w.transpose()).rowwise() + hp.k_b.transpose();
    hc.v = (x * hp.v_w.transpose()).rowwise() + hp.v_b.transpose();
    hc.a = softmax_rows(hc.q * hc.k.transpose() * scale);
    hc.o = hc.a * hc.v;
    cache.concat.middleCols(h * cfg.head_dim, cfg.head_dim) = hc.o;
    cache.heads.push_back(std::move(hc));
  }
  cache.h = (cache.concat * params.attn_out_w.transpose()).rowwise() +
            params.attn_out_b.transpose();
  return cache;
}

struct AdditiveCache {
  Eigen::MatrixXd c;            // tanh activations
  Eigen::MatrixXd alpha;        // per-feature weights
  Eigen::VectorXd alpha_shared; // shared weights over time
  Eigen::VectorXd h_f;
};

AdditiveCache additive_cached(const Eigen::MatrixXd& h,
                              const Eigen::MatrixXd& w,
                              const Eigen::VectorXd& b, bool per_feature) {
  require(h.rows() == w.rows() && w.rows() == w.cols() &&
              b.size() == w.rows(),
          Cond::ShapeMismatch, "additive attention shapes inconsistent");
  AdditiveCache cache;
  cache.c = ((w * h).colwise() + b).array().tanh();
  if (per_feature) {
    cache.alpha.resize(h.rows(), h.cols());
    cache.h_f.resize(h.cols());
    for (int i = 0; i < h.cols(); ++i) {
      cache.alpha.col(i) = softmax_vec(cache.c.col(i));
      cache.h_f[i] = cache.alpha.col(i).dot(h.col(i));
    }
  } else {
    cache.alpha_shared = softmax_vec(cache.c.rowwise().mean());
    cache.h_f = h.transpose() * cache.alpha_shared;
  }
  return cache;
}

}  // namespace

Eigen::MatrixXd self_attention(const Eigen::MatrixXd& x,
                               const Parameters& params,
                               const ModelConfig& cfg) {
  require(x.cols() == cfg.stream_dim(), Cond::ShapeMismatch,
          "self-attention input has ", x.cols(), " features, expected ",
          cfg.stream_dim());
  return self_attention_cached(x, params, cfg).h;
}

Eigen::VectorXd additive_attention(const Eigen::MatrixXd& h,
                                   const Eigen::MatrixXd& w,
                                   const Eigen::VectorXd& b,
                                   bool per_feature) {
  return additive_cached(h, w, b, per_feature).h_f;
}

// ---------------------------------------------------------------------------
// Full forward
// ---------------------------------------------------------------------------

struct PerVideoCache {
  int true_len = 0;
  Eigen::MatrixXd stream;   // stream_dim x max_frames
  Eigen::MatrixXd conv;     // stream_dim x conv_out (pre-BN)
  Eigen::MatrixXd xbn;      // conv_out x stream_dim (time-major, post-BN)
  SelfAttentionCache attn;
  AdditiveCache additive;
  Eigen::VectorXd z;        // concat input to the head
  Eigen::VectorXd a1;       // pre-activation
  Eigen::VectorXd e1;       // post-ELU
  Eigen::VectorXd mask;     // dropout mask (empty in eval / p = 0)
  double pred = 0.0;
};

struct ForwardCache {
  Mode mode = Mode::Eval;
  std::vector<int> order;  // batch indices sorted by video_id
  std::vector<PerVideoCache> videos;  // in sorted order
  Eigen::VectorXd bn_mean, bn_var;    // statistics used by the pass
};

BatchResult forward_batch(const Model& model,
                          const std::vector<VideoInput>& batch, Mode mode,
                          std::uint64_t dropout_seed) {
  const ModelConfig& cfg = model.config;
  cfg.validate();
  require(!batch.empty(), Cond::InvalidConfig, "empty batch");
  for (const auto& input : batch) {
    require(input.accepted, Cond::RejectedVideo, "video ", input.video_id,
            " was rejected by face-coverage screening");
  }

  auto cache = std::make_shared<ForwardCache>();
  cache->mode = mode;
  cache->order.resize(batch.size());
  std::iota(cache->order.begin(), cache->order.end(), 0);
  std::sort(cache->order.begin(), cache->order.end(), [&](int a, int b) {
    return batch[a].video_id < batch[b].video_id;
  });
  cache->videos.resize(batch.size());

  const int s = cfg.stream_dim();
  const int out_len = cfg.conv_out();

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& input = batch[cache->order[i]];
    auto& pv = cache->videos[i];
    pv.true_len = static_cast<int>(input.embeddings.cols());
    pv.stream = project_and_pad(input, model.params, cfg);
    pv.conv = conv_downsample(pv.stream, model.params, cfg);
  }

  // Batch normalization over every (video, time) position per channel.
  if (mode == Mode::Train) {
    const double n = static_cast<double>(batch.size() * out_len);
    cache->bn_mean = Eigen::VectorXd::Zero(s);
    for (const auto& pv : cache->videos) {
      cache->bn_mean += pv.conv.rowwise().sum();
    }
    cache->bn_mean /= n;
    cache->bn_var = Eigen::VectorXd::Zero(s);
    for (const auto& pv : cache->videos) {
      cache->bn_var +=
          (pv.conv.colwise() - cache->bn_mean).array().square().rowwise().sum().matrix();
    }
    cache->bn_var /= n;
  } else {
    cache->bn_mean = model.bn.running_mean;
    cache->bn_var = model.bn.running_var;
  }
  const Eigen::ArrayXd inv_std =
      (cache->bn_var.array() + cfg.bn_epsilon).sqrt().inverse();

  BatchResult result;
  result.predictions.resize(batch.size());

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& input = batch[cache->order[i]];
    auto& pv = cache->videos[i];

    Eigen::MatrixXd normalized =
        ((pv.conv.colwise() - cache->bn_mean).array().colwise() * inv_std)
            .colwise() *
        model.params.bn_gamma.array();
    normalized.colwise() += model.params.bn_beta;
    pv.xbn = normalized.transpose();  // time-major for attention

    pv.attn = self_attention_cached(pv.xbn, model.params, cfg);
    pv.additive = additive_cached(pv.attn.h, model.params.add_w,
                                  model.params.add_b, cfg.additive_per_feature);

    pv.z.resize(cfg.concat_dim());
    pv.z.head(s) = pv.additive.h_f;
    pv.z.tail(cfg.prosody_dim) = input.prosody;

    pv.a1 = model.params.head1_w * pv.z + model.params.head1_b;
    pv.e1 = pv.a1.unaryExpr(
        [](double v) { return v > 0.0 ? v : std::expm1(v); });

    Eigen::VectorXd d1 = pv.e1;
    if (mode == Mode::Train && cfg.dropout > 0.0) {
      Rng rng(derive_seed(dropout_seed, 0xD80, i));
      pv.mask.resize(pv.e1.size());
      const double keep = 1.0 - cfg.dropout;
      for (int j = 0; j < pv.mask.size(); ++j) {
        pv.mask[j] = rng.uniform() >= cfg.dropout ? 1.0 / keep : 0.0;
      }
      d1 = pv.e1.cwiseProduct(pv.mask);
    }
    pv.pred = (model.params.head2_w * d1 + model.params.head2_b)(0);
    result.predictions[cache->order[i]] = pv.pred;
  }

  result.cache = std::move(cache);
  return result;
}

double forward_one(const Model& model, const VideoInput& input, Mode mode) {
  return forward_batch(model, {input}, mode).predictions[0];
}

double batch_loss(const Model& model, const std::vector<VideoInput>& batch,
                  const Eigen::VectorXd& targets, Mode mode,
                  std::uint64_t dropout_seed, double l2) {
  require(targets.size() == static_cast<Eigen::Index>(batch.size()),
          Cond::LengthMismatch, "targets/batch size mismatch");
  const auto result = forward_batch(model, batch, mode, dropout_seed);
  const double mse =
      (result.predictions - targets).squaredNorm() / batch.size();
  const double reg = l2 * model.params.flatten().squaredNorm();
  return mse + reg;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

Parameters backward_batch(const Model& model,
                          const std::vector<VideoInput>& batch,
                          const Eigen::VectorXd& targets,
                          const BatchResult& forward, double l2) {
  const ModelConfig& cfg = model.config;
  const ForwardCache& cache = *forward.cache;
  require(cache.mode == Mode::Train, Cond::InvalidConfig,
          "backward requires a train-mode forward pass");
  require(targets.size() == static_cast<Eigen::Index>(batch.size()),
          Cond::LengthMismatch, "targets/batch size mismatch");

  Parameters grad = Parameters::zeros(cfg);
  const int s = cfg.stream_dim();
  const int out_len = cfg.conv_out();
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const Eigen::ArrayXd inv_std =
      (cache.bn_var.array() + cfg.bn_epsilon).sqrt().inverse();

  // Per-video gradients w.r.t. the batch-norm output, accumulated first so
  // the batch-coupled batch-norm backward can run in one sweep afterwards.
  std::vector<Eigen::MatrixXd> dxbn(batch.size());

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& pv = cache.videos[i];
    const int orig = cache.order[i];
    const double dpred = 2.0 * (pv.pred - targets[orig]) * inv_b;

    // Output head.
    Eigen::VectorXd d1 = pv.e1;
    if (pv.mask.size() > 0) d1 = pv.e1.cwiseProduct(pv.mask);
    grad.head2_w += dpred * d1.transpose();
    grad.head2_b[0] += dpred;
    Eigen::VectorXd dd1 = model.params.head2_w.transpose() * dpred;
    if (pv.mask.size() > 0) dd1 = dd1.cwiseProduct(pv.mask);
    const Eigen::VectorXd da1 = dd1.cwiseProduct(pv.a1.unaryExpr(
        [](double v) { return v > 0.0 ? 1.0 : std::exp(v); }));
    grad.head1_w += da1 * pv.z.transpose();
    grad.head1_b += da1;
    const Eigen::VectorXd dz = model.params.head1_w.transpose() * da1;
    const Eigen::VectorXd dh_f = dz.head(s);

    // Additive attention.
    const Eigen::MatrixXd& h = pv.attn.h;
    Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(h.rows(), h.cols());
    Eigen::MatrixXd dc(h.rows(), h.cols());
    if (cfg.additive_per_feature) {
      for (int col = 0; col < h.cols(); ++col) {
        const Eigen::VectorXd alpha = pv.additive.alpha.col(col);
        const Eigen::VectorXd dalpha = dh_f[col] * h.col(col);
        dh.col(col) += dh_f[col] * alpha;
        const double dot = dalpha.dot(alpha);
        dc.col(col) = alpha.array() * (dalpha.array() - dot);
      }
    } else {
      const Eigen::VectorXd& alpha = pv.additive.alpha_shared;
      const Eigen::VectorXd dalpha = h * dh_f;
      dh += alpha * dh_f.transpose();
      const double dot = dalpha.dot(alpha);
      const Eigen::VectorXd dlogits = alpha.cwiseProduct(
          dalpha - Eigen::VectorXd::Constant(alpha.size(), dot));
      dc = dlogits.replicate(1, h.cols()) / static_cast<double>(h.cols());
    }
    const Eigen::MatrixXd dlin =
        dc.cwiseProduct((1.0 - pv.additive.c.array().square()).matrix());
    grad.add_w += dlin * h.transpose();
    grad.add_b += dlin.rowwise().sum();
    dh += model.params.add_w.transpose() * dlin;

    // Self-attention output projection.
    grad.attn_out_w += dh.transpose() * pv.attn.concat;
    grad.attn_out_b += dh.colwise().sum().transpose();
    const Eigen::MatrixXd dconcat = dh * model.params.attn_out_w;

    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(out_len, s);
    for (int hi = 0; hi < cfg.heads; ++hi) {
      const auto& hc = pv.attn.heads[hi];
      const auto& hp = model.params.heads[hi];
      auto& hg = grad.heads[hi];
      const Eigen::MatrixXd do_h =
          dconcat.middleCols(hi * cfg.head_dim, cfg.head_dim);
      const Eigen::MatrixXd da = do_h * hc.v.transpose();
      const Eigen::MatrixXd dv = hc.a.transpose() * do_h;
      Eigen::MatrixXd dzraw(out_len, out_len);
      for (int r = 0; r < out_len; ++r) {
        const double dot = da.row(r).dot(hc.a.row(r));
        dzraw.row(r) =
            (hc.a.row(r).array() * (da.row(r).array() - dot)).matrix() * scale;
      }
      const Eigen::MatrixXd dq = dzraw * hc.k;
      const Eigen::MatrixXd dk = dzraw.transpose() * hc.q;
      hg.q_w += dq.transpose() * pv.xbn;
      hg.q_b += dq.colwise().sum().transpose();
      hg.k_w += dk.transpose() * pv.xbn;
      hg.k_b += dk.colwise().sum().transpose();
      hg.v_w += dv.transpose() * pv.xbn;
      hg.v_b += dv.colwise().sum().transpose();
      dx += dq * hp.q_w + dk * hp.k_w + dv * hp.v_w;
    }
    dxbn[i] = std::move(dx);
  }

  // Batch-norm backward over the whole batch, then conv and projection.
  const double n_bn = static_cast<double>(batch.size() * out_len);
  Eigen::VectorXd sum_dy = Eigen::VectorXd::Zero(s);
  Eigen::VectorXd sum_dy_xhat = Eigen::VectorXd::Zero(s);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& pv = cache.videos[i];
    const Eigen::MatrixXd xhat =
        ((pv.conv.colwise() - cache.bn_mean).array().colwise() * inv_std)
            .matrix();  // stream_dim x conv_out
    const Eigen::MatrixXd dy = dxbn[i].transpose();  // stream_dim x conv_out
    sum_dy += dy.rowwise().sum();
    sum_dy_xhat += dy.cwiseProduct(xhat).rowwise().sum();
  }
  grad.bn_beta += sum_dy;
  grad.bn_gamma += sum_dy_xhat;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& pv = cache.videos[i];
    const auto& input = batch[cache.order[i]];
    const Eigen::MatrixXd xhat =
        ((pv.conv.colwise() - cache.bn_mean).array().colwise() * inv_std)
            .matrix();
    const Eigen::MatrixXd dy = dxbn[i].transpose();

    // d/dx of train-mode batch norm (batch statistics in the graph).
    Eigen::MatrixXd dconv =
        (dy.array().colwise() -
         (sum_dy.array() / n_bn));
    dconv.array() -= xhat.array().colwise() * (sum_dy_xhat.array() / n_bn);
    dconv.array().colwise() *=
        model.params.bn_gamma.array() * inv_std;

    // Conv backward.
    Eigen::MatrixXd dstream =
        Eigen::MatrixXd::Zero(s, cfg.max_frames);
    for (int c = 0; c < s; ++c) {
      for (int j = 0; j < out_len; ++j) {
        const double g = dconv(c, j);
        grad.conv_b[c] += g;
        const int base = j * cfg.stride;
        for (int k = 0; k < cfg.kernel; ++k) {
          grad.conv_w(c, k) += g * pv.stream(c, base + k);
          dstream(c, base + k) += g * model.params.conv_w(c, k);
        }
      }
    }

    // Projection backward over the real (unpadded) frames only.
    const int t = pv.true_len;
    const Eigen::MatrixXd dproj = dstream.topLeftCorner(cfg.proj_dim, t);
    grad.down_w += dproj * input.embeddings.transpose();
    grad.down_b += dproj.rowwise().sum();
  }

  if (l2 != 0.0) {
    Eigen::VectorXd flat = grad.flatten();
    flat += 2.0 * l2 * model.params.flatten();
    grad.unflatten(flat);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// NAdam
// ---------------------------------------------------------------------------

NAdamState NAdamState::zeros(std::size_t n) {
  NAdamState s;
  s.m = Eigen::VectorXd::Zero(n);
  s.v = Eigen::VectorXd::Zero(n);
  return s;
}

void nadam_step(Eigen::VectorXd& theta, NAdamState& state,
                const Eigen::VectorXd& grad, const NAdamConfig& cfg) {
  require(theta.size() == grad.size() && theta.size() == state.m.size(),
          Cond::ShapeMismatch, "optimizer state size mismatch");
  require(grad.allFinite(), Cond::NonFiniteGradient,
          "gradient contains non-finite values");

  const long t = state.step + 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v =
      cfg.beta2 * state.v.array() + (1.0 - cfg.beta2) * grad.array().square();

  const double m_corr = 1.0 - std::pow(cfg.beta1, static_cast<double>(t + 1));
  const double g_corr = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double v_corr = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));

  // Nesterov blend of the look-ahead first moment and the raw gradient.
  const Eigen::ArrayXd m_bar = cfg.beta1 * state.m.array() / m_corr +
                               (1.0 - cfg.beta1) * grad.array() / g_corr;
  const Eigen::ArrayXd denom = (state.v.array() / v_corr).sqrt() + cfg.eps;
  theta.array() -= cfg.lr * m_bar / denom;
  state.step = t;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TrainResult train(Model model, const std::vector<VideoInput>& train_set,
                  const Eigen::VectorXd& train_y,
                  const std::vector<VideoInput>& val_set,
                  const Eigen::VectorXd& val_y, const TrainConfig& cfg) {
  require(!train_set.empty() && !val_set.empty(), Cond::InvalidConfig,
          "train and validation sets must be non-empty");
  require(train_y.size() == static_cast<Eigen::Index>(train_set.size()) &&
              val_y.size() == static_cast<Eigen::Index>(val_set.size()),
          Cond::LengthMismatch, "targets do not match inputs");
  require(cfg.batch_size >= 1 && cfg.max_epochs >= 1, Cond::InvalidConfig,
          "batch_size and max_epochs must be positive");
  model.config.dropout = cfg.dropout;
  model.config.validate();

  TrainResult result;
  Eigen::VectorXd theta = model.params.flatten();
  NAdamState opt_state = NAdamState::zeros(theta.size());

  Model best = model;
  double best_val = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 0x50f1e, epoch));
    shuffle_rng.shuffle(order);

    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t stop =
          std::min(order.size(), start + cfg.batch_size);
      std::vector<VideoInput> batch;
      Eigen::VectorXd targets(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(train_set[order[i]]);
        targets[i - start] = train_y[order[i]];
      }
      const std::uint64_t dropout_seed =
          derive_seed(cfg.seed, 0xD0, epoch, start);
      const auto fwd =
          forward_batch(model, batch, Mode::Train, dropout_seed);
      const auto grad =
          backward_batch(model, batch, targets, fwd, cfg.l2);
      nadam_step(theta, opt_state, grad.flatten(), cfg.opt);
      model.params.unflatten(theta);

      model.bn.running_mean = cfg.bn_momentum * model.bn.running_mean +
                              (1.0 - cfg.bn_momentum) * fwd.cache->bn_mean;
      model.bn.running_var = cfg.bn_momentum * model.bn.running_var +
                             (1.0 - cfg.bn_momentum) * fwd.cache->bn_var;
    }

    EpochStats stats;
    stats.epoch = epoch;
    {
      const auto fwd = forward_batch(model, train_set, Mode::Eval);
      stats.train_mse =
          (fwd.predictions - train_y).squaredNorm() / train_set.size();
    }
    {
      const auto fwd = forward_batch(model, val_set, Mode::Eval);
      stats.val_mse =
          (fwd.predictions - val_y).squaredNorm() / val_set.size();
      const double r = stats::pearson(
          std::span<const double>(fwd.predictions.data(),
                                  fwd.predictions.size()),
          std::span<const double>(val_y.data(), val_y.size()));
      stats.val_r = std::isfinite(r) ? r : 0.0;
    }
    require(std::isfinite(stats.train_mse) && std::isfinite(stats.val_mse),
            Cond::Diverged, "loss became non-finite at epoch ", epoch);
    result.history.push_back(stats);

    if (stats.val_mse < best_val) {
      best_val = stats.val_mse;
      best = model;
      result.best_epoch = epoch;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs > cfg.patience) break;
    }
  }

  result.model = std::move(best);
  return result;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void save_model(const Model& model, const std::string& path) {
  const auto& c = model.config;
  json j;
  j["config"] = {{"max_frames", c.max_frames},
                 {"embed_dim", c.embed_dim},
                 {"proj_dim", c.proj_dim},
                 {"ff_channels", c.ff_channels},
                 {"kernel", c.kernel},
                 {"stride", c.stride},
                 {"heads", c.heads},
                 {"head_dim", c.head_dim},
                 {"prosody_dim", c.prosody_dim},
                 {"head_hidden", c.head_hidden},
                 {"face_confidence", c.face_confidence},
                 {"min_coverage", c.min_coverage},
                 {"dropout", c.dropout},
                 {"additive_per_feature", c.additive_per_feature}};
  const Eigen::VectorXd flat = model.params.flatten();
  j["parameters"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  j["bn_running_mean"] =
      std::vector<double>(model.bn.running_mean.data(),
                          model.bn.running_mean.data() + model.bn.running_mean.size());
  j["bn_running_var"] =
      std::vector<double>(model.bn.running_var.data(),
                          model.bn.running_var.data() + model.bn.running_var.size());
  io::atomic_write(path, j.dump() + "\n");
}

Model load_model(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    raise(Cond::MalformedRecord, "model file ", path, ": ", e.what());
  }
  ModelConfig cfg;
  const auto& c = j.at("config");
  cfg.max_frames = c.at("max_frames").get<int>();
  cfg.embed_dim = c.at("embed_dim").get<int>();
  cfg.proj_dim = c.at("proj_dim").get<int>();
  cfg.ff_channels = c.at("ff_channels").get<int>();
  cfg.kernel = c.at("kernel").get<int>();
  cfg.stride = c.at("stride").get<int>();
  cfg.heads = c.at("heads").get<int>();
  cfg.head_dim = c.at("head_dim").get<int>();
  cfg.prosody_dim = c.at("prosody_dim").get<int>();
  cfg.head_hidden = c.at("head_hidden").get<int>();
  cfg.face_confidence = c.at("face_confidence").get<double>();
  cfg.min_coverage = c.at("min_coverage").get<double>();
  cfg.dropout = c.at("dropout").get<double>();
  cfg.additive_per_feature = c.at("additive_per_feature").get<bool>();

  Model model;
  model.config = cfg;
  model.params = Parameters::zeros(cfg);
  const auto flat = j.at("parameters").get<std::vector<double>>();
  model.params.unflatten(
      Eigen::Map<const Eigen::VectorXd>(flat.data(), flat.size()));
  const auto mean = j.at("bn_running_mean").get<std::vector<double>>();
  const auto var = j.at("bn_running_var").get<std::vector<double>>();
  model.bn.running_mean =
      Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size());
  model.bn.running_var =
      Eigen::Map<const Eigen::VectorXd>(var.data(), var.size());
  return model;
}

}  // namespace fairgrade::attn
