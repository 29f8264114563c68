#include "op2vec/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "op2vec/error.hpp"
#include "op2vec/util.hpp"

namespace op2vec {
namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// sigmoid output clamped away from the closed endpoints so downstream
// logs never see 0 or 1.
double bounded_probability(double z) {
  double p = sigmoid(z);
  if (p <= 0.0) return std::numeric_limits<double>::min();
  if (p >= 1.0) return 1.0 - 1e-16;
  return p;
}

// Binary cross-entropy in the numerically stable logit form.
double bce_from_logit(double z, int label) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) -
         static_cast<double>(label) * z;
}

struct LayerShape {
  size_t in_channels;
  size_t in_length;
  size_t out_length;      // after convolution
  size_t pooled_length;   // after max pooling (== out_length if no pool)
};

// Time lengths and channel counts through the conv stack.
std::vector<LayerShape> conv_shapes(const ClassifierConfig& cfg) {
  std::vector<LayerShape> shapes;
  size_t channels = cfg.channels;
  size_t length = cfg.input_length;
  for (const ConvLayerSpec& layer : cfg.conv) {
    LayerShape s{};
    s.in_channels = channels;
    s.in_length = length;
    if (length < layer.kernel) {
      fail(Errc::bad_config,
           "conv kernel " + std::to_string(layer.kernel) +
               " wider than its input length " + std::to_string(length));
    }
    s.out_length = length - layer.kernel + 1;
    s.pooled_length =
        layer.pool >= 2 ? s.out_length / layer.pool : s.out_length;
    if (s.pooled_length < 1) {
      fail(Errc::bad_config, "pooling width " + std::to_string(layer.pool) +
                                 " leaves no output");
    }
    shapes.push_back(s);
    channels = layer.filters;
    length = s.pooled_length;
  }
  return shapes;
}

size_t global_pool_width(const ClassifierConfig& cfg) {
  return cfg.conv.empty() ? cfg.channels : cfg.conv.back().filters;
}

}  // namespace

void ClassifierConfig::validate() const {
  if (input_length < 1) fail(Errc::bad_config, "input_length must be >= 1");
  if (channels < 1) fail(Errc::bad_config, "channels must be >= 1");
  for (const ConvLayerSpec& layer : conv) {
    if (layer.filters < 1 || layer.kernel < 1) {
      fail(Errc::bad_config, "conv layers need filters >= 1 and kernel >= 1");
    }
  }
  if (!(lr > 0.0)) fail(Errc::bad_config, "lr must be positive");
  if (epochs < 1) fail(Errc::bad_config, "epochs must be >= 1");
  if (batch_size < 1) fail(Errc::bad_config, "batch_size must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    fail(Errc::bad_config, "threshold must lie in [0, 1]");
  }
  conv_shapes(*this);  // shape feasibility
}

Metrics Metrics::from_counts(uint64_t tp, uint64_t fp, uint64_t tn,
                             uint64_t fn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  uint64_t total = tp + fp + tn + fn;
  if (total > 0) {
    m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
  }
  if (tp + fp > 0) {
    m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  if (tp + fn > 0) {
    m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  if (m.precision && m.recall && (*m.precision + *m.recall) > 0.0) {
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

std::string metrics_to_json(const Metrics& m) {
  nlohmann::json doc;
  doc["tp"] = m.tp;
  doc["fp"] = m.fp;
  doc["tn"] = m.tn;
  doc["fn"] = m.fn;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) {
      doc[key] = *v;
    } else {
      doc[key] = nullptr;
    }
  };
  put("accuracy", m.accuracy);
  put("precision", m.precision);
  put("recall", m.recall);
  put("f1", m.f1);
  return doc.dump();
}

std::vector<double> pad_or_truncate(const EmbeddedProgram& program,
                                    size_t length) {
  if (length < 1) {
    fail(Errc::bad_config, "frame length must be >= 1");
  }
  std::vector<double> frame(length * program.dim, 0.0);
  size_t keep = std::min(program.rows, length);
  for (size_t i = 0; i < keep * program.dim; ++i) {
    frame[i] = program.data[i];
  }
  return frame;
}

ClassifierModel::ClassifierModel(const ClassifierConfig& config)
    : config_(config) {
  config_.validate();
  auto add_block = [&](size_t n) {
    block_offsets_.push_back(params_.size());
    block_sizes_.push_back(n);
    params_.resize(params_.size() + n, 0.0);
  };

  size_t channels = config_.channels;
  for (const ConvLayerSpec& layer : config_.conv) {
    add_block(static_cast<size_t>(layer.filters) * channels * layer.kernel);
    add_block(layer.filters);
    channels = layer.filters;
  }
  size_t width = global_pool_width(config_);
  for (uint32_t dense_width : config_.dense) {
    add_block(static_cast<size_t>(dense_width) * width);
    add_block(dense_width);
    width = dense_width;
  }
  add_block(width);  // final unit weights
  add_block(1);      // final unit bias
}

ClassifierModel ClassifierModel::init(const ClassifierConfig& config,
                                      uint64_t seed) {
  ClassifierModel model(config);
  std::mt19937_64 rng(seed);

  size_t block = 0;
  auto fill_uniform = [&](size_t fan_in) {
    double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    double* p = &model.params_[model.block_offsets_[block]];
    for (size_t i = 0; i < model.block_sizes_[block]; ++i) {
      p[i] = dist(rng);
    }
    ++block;
  };
  auto skip_zero_bias = [&] { ++block; };

  size_t channels = config.channels;
  for (const ConvLayerSpec& layer : config.conv) {
    fill_uniform(static_cast<size_t>(channels) * layer.kernel);
    skip_zero_bias();
    channels = layer.filters;
  }
  size_t width = global_pool_width(config);
  for (uint32_t dense_width : config.dense) {
    fill_uniform(width);
    skip_zero_bias();
    width = dense_width;
  }
  fill_uniform(width);
  skip_zero_bias();
  return model;
}

// Intermediate activations recorded on the forward pass for backprop.
struct ClassifierModel::Tape {
  // Per conv layer: input (channel-major), pre-activation, post-ReLU,
  // pooled output, and the argmax index behind every pooled value.
  std::vector<std::vector<double>> conv_in;
  std::vector<std::vector<double>> conv_pre;
  std::vector<std::vector<double>> conv_act;
  std::vector<std::vector<double>> conv_pooled;
  std::vector<std::vector<size_t>> pool_argmax;
  std::vector<size_t> global_argmax;
  std::vector<double> global_out;
  // Per dense layer (hidden then final): input and pre-activation.
  std::vector<std::vector<double>> dense_in;
  std::vector<std::vector<double>> dense_pre;
};

double ClassifierModel::forward(const std::vector<double>& frame,
                                Tape* tape) const {
  const size_t L = config_.input_length;
  const size_t D = config_.channels;
  if (frame.size() != L * D) {
    fail(Errc::shape_mismatch, "frame has " + std::to_string(frame.size()) +
                                   " values, expected " +
                                   std::to_string(L * D));
  }

  // Channel-major copy of the row-major frame.
  std::vector<double> x(D * L);
  for (size_t t = 0; t < L; ++t) {
    for (size_t c = 0; c < D; ++c) {
      x[c * L + t] = frame[t * D + c];
    }
  }

  auto shapes = conv_shapes(config_);
  size_t block = 0;
  for (size_t l = 0; l < config_.conv.size(); ++l) {
    const ConvLayerSpec& layer = config_.conv[l];
    const LayerShape& s = shapes[l];
    const double* weights = &params_[block_offsets_[block]];
    const double* bias = &params_[block_offsets_[block + 1]];
    block += 2;

    std::vector<double> pre(static_cast<size_t>(layer.filters) * s.out_length);
    for (size_t o = 0; o < layer.filters; ++o) {
      const double* w_o = weights + o * s.in_channels * layer.kernel;
      for (size_t t = 0; t < s.out_length; ++t) {
        double acc = bias[o];
        for (size_t c = 0; c < s.in_channels; ++c) {
          const double* w = w_o + c * layer.kernel;
          const double* in = &x[c * s.in_length + t];
          for (size_t k = 0; k < layer.kernel; ++k) {
            acc += w[k] * in[k];
          }
        }
        pre[o * s.out_length + t] = acc;
      }
    }

    std::vector<double> act(pre.size());
    for (size_t i = 0; i < pre.size(); ++i) {
      act[i] = pre[i] > 0.0 ? pre[i] : 0.0;
    }

    std::vector<double> pooled;
    std::vector<size_t> argmax;
    if (layer.pool >= 2) {
      pooled.resize(static_cast<size_t>(layer.filters) * s.pooled_length);
      argmax.resize(pooled.size());
      for (size_t o = 0; o < layer.filters; ++o) {
        for (size_t u = 0; u < s.pooled_length; ++u) {
          size_t begin = u * layer.pool;
          size_t best = begin;
          double best_v = act[o * s.out_length + begin];
          for (size_t t = begin + 1; t < begin + layer.pool; ++t) {
            if (act[o * s.out_length + t] > best_v) {
              best_v = act[o * s.out_length + t];
              best = t;
            }
          }
          pooled[o * s.pooled_length + u] = best_v;
          argmax[o * s.pooled_length + u] = best;
        }
      }
    } else {
      pooled = act;
    }

    if (tape) {
      tape->conv_in.push_back(std::move(x));
      tape->conv_pre.push_back(pre);
      tape->conv_act.push_back(std::move(act));
      tape->conv_pooled.push_back(pooled);
      tape->pool_argmax.push_back(std::move(argmax));
    }
    x = std::move(pooled);
  }

  // Global max pool over time.
  size_t g_channels = global_pool_width(config_);
  size_t g_length = x.size() / g_channels;
  std::vector<double> g(g_channels);
  std::vector<size_t> g_argmax(g_channels);
  for (size_t c = 0; c < g_channels; ++c) {
    size_t best = 0;
    double best_v = x[c * g_length];
    for (size_t t = 1; t < g_length; ++t) {
      if (x[c * g_length + t] > best_v) {
        best_v = x[c * g_length + t];
        best = t;
      }
    }
    g[c] = best_v;
    g_argmax[c] = best;
  }
  if (tape) {
    tape->global_argmax = std::move(g_argmax);
    tape->global_out = g;
  }

  // Dense stack: hidden layers use ReLU, the final unit is linear (its
  // sigmoid lives in the loss / probability accessors).
  std::vector<double> h = std::move(g);
  for (uint32_t dense_width : config_.dense) {
    const double* weights = &params_[block_offsets_[block]];
    const double* bias = &params_[block_offsets_[block + 1]];
    block += 2;
    std::vector<double> pre(dense_width);
    for (size_t o = 0; o < dense_width; ++o) {
      double acc = bias[o];
      const double* w = weights + o * h.size();
      for (size_t i = 0; i < h.size(); ++i) {
        acc += w[i] * h[i];
      }
      pre[o] = acc;
    }
    if (tape) {
      tape->dense_in.push_back(h);
      tape->dense_pre.push_back(pre);
    }
    for (double& v : pre) {
      v = v > 0.0 ? v : 0.0;
    }
    h = std::move(pre);
  }

  const double* weights = &params_[block_offsets_[block]];
  const double* bias = &params_[block_offsets_[block + 1]];
  double z = bias[0];
  for (size_t i = 0; i < h.size(); ++i) {
    z += weights[i] * h[i];
  }
  if (tape) {
    tape->dense_in.push_back(std::move(h));
    tape->dense_pre.push_back({z});
  }
  return z;
}

double ClassifierModel::score(const std::vector<double>& frame) const {
  return forward(frame, nullptr);
}

double ClassifierModel::probability(const std::vector<double>& frame) const {
  return bounded_probability(forward(frame, nullptr));
}

double ClassifierModel::loss_on(const std::vector<double>& frame,
                                int label) const {
  double z = forward(frame, nullptr);
  if (config_.loss == LossKind::cross_entropy) {
    return bce_from_logit(z, label);
  }
  double p = sigmoid(z);
  double r = p - static_cast<double>(label);
  return 0.5 * r * r;
}

double ClassifierModel::accumulate_gradient(const std::vector<double>& frame,
                                            int label,
                                            std::vector<double>& grad) const {
  if (grad.size() != params_.size()) {
    fail(Errc::shape_mismatch, "gradient buffer size mismatch");
  }
  Tape tape;
  double z = forward(frame, &tape);
  double p = sigmoid(z);
  double loss;
  double dz;
  if (config_.loss == LossKind::cross_entropy) {
    loss = bce_from_logit(z, label);
    dz = p - static_cast<double>(label);
  } else {
    double r = p - static_cast<double>(label);
    loss = 0.5 * r * r;
    dz = r * p * (1.0 - p);
  }

  size_t final_block = block_offsets_.size() - 2;

  // Final unit.
  {
    const std::vector<double>& in = tape.dense_in.back();
    double* dw = &grad[block_offsets_[final_block]];
    for (size_t i = 0; i < in.size(); ++i) {
      dw[i] += dz * in[i];
    }
    grad[block_offsets_[final_block + 1]] += dz;
  }
  std::vector<double> d_h(tape.dense_in.back().size());
  {
    const double* w = &params_[block_offsets_[final_block]];
    for (size_t i = 0; i < d_h.size(); ++i) {
      d_h[i] = dz * w[i];
    }
  }

  // Hidden dense layers, last to first.
  for (size_t l = config_.dense.size(); l-- > 0;) {
    size_t block = 2 * config_.conv.size() + 2 * l;
    const std::vector<double>& pre = tape.dense_pre[l];
    const std::vector<double>& in = tape.dense_in[l];
    std::vector<double> d_pre(pre.size());
    for (size_t o = 0; o < pre.size(); ++o) {
      d_pre[o] = pre[o] > 0.0 ? d_h[o] : 0.0;
    }
    double* dw = &grad[block_offsets_[block]];
    double* db = &grad[block_offsets_[block + 1]];
    const double* w = &params_[block_offsets_[block]];
    std::vector<double> d_in(in.size(), 0.0);
    for (size_t o = 0; o < pre.size(); ++o) {
      db[o] += d_pre[o];
      for (size_t i = 0; i < in.size(); ++i) {
        dw[o * in.size() + i] += d_pre[o] * in[i];
        d_in[i] += d_pre[o] * w[o * in.size() + i];
      }
    }
    d_h = std::move(d_in);
  }

  // Undo the global max pool: gradient flows to each channel's argmax.
  auto shapes = conv_shapes(config_);
  size_t g_channels = global_pool_width(config_);
  size_t g_length;
  if (config_.conv.empty()) {
    g_length = config_.input_length;
  } else {
    g_length = shapes.back().pooled_length;
  }
  std::vector<double> d_x(g_channels * g_length, 0.0);
  for (size_t c = 0; c < g_channels; ++c) {
    d_x[c * g_length + tape.global_argmax[c]] = d_h[c];
  }

  // Conv layers, last to first.
  for (size_t l = config_.conv.size(); l-- > 0;) {
    const ConvLayerSpec& layer = config_.conv[l];
    const LayerShape& s = shapes[l];
    size_t block = 2 * l;
    const double* weights = &params_[block_offsets_[block]];
    double* dw = &grad[block_offsets_[block]];
    double* db = &grad[block_offsets_[block + 1]];

    // Through the pooling stage back onto the conv activation grid.
    std::vector<double> d_act(
        static_cast<size_t>(layer.filters) * s.out_length, 0.0);
    if (layer.pool >= 2) {
      for (size_t o = 0; o < layer.filters; ++o) {
        for (size_t u = 0; u < s.pooled_length; ++u) {
          size_t t = tape.pool_argmax[l][o * s.pooled_length + u];
          d_act[o * s.out_length + t] += d_x[o * s.pooled_length + u];
        }
      }
    } else {
      d_act = d_x;
    }

    const std::vector<double>& pre = tape.conv_pre[l];
    const std::vector<double>& in = tape.conv_in[l];
    std::vector<double> d_in(s.in_channels * s.in_length, 0.0);
    for (size_t o = 0; o < layer.filters; ++o) {
      const double* w_o = weights + o * s.in_channels * layer.kernel;
      double* dw_o = dw + o * s.in_channels * layer.kernel;
      for (size_t t = 0; t < s.out_length; ++t) {
        double d = d_act[o * s.out_length + t];
        if (d == 0.0 || pre[o * s.out_length + t] <= 0.0) {
          continue;
        }
        db[o] += d;
        for (size_t c = 0; c < s.in_channels; ++c) {
          const double* in_c = &in[c * s.in_length + t];
          double* dw_c = dw_o + c * layer.kernel;
          double* d_in_c = &d_in[c * s.in_length + t];
          const double* w_c = w_o + c * layer.kernel;
          for (size_t k = 0; k < layer.kernel; ++k) {
            dw_c[k] += d * in_c[k];
            d_in_c[k] += d * w_c[k];
          }
        }
      }
    }
    d_x = std::move(d_in);
  }
  return loss;
}

double forward_pass(const ClassifierModel& model,
                    const EmbeddedProgram& record) {
  if (record.dim != model.config().channels) {
    fail(Errc::shape_mismatch,
         record.source + ": record dim " + std::to_string(record.dim) +
             " != configured channels " +
             std::to_string(model.config().channels));
  }
  return model.probability(
      pad_or_truncate(record, model.config().input_length));
}

double mse_loss(const std::vector<double>& pred,
                const std::vector<double>& target) {
  if (pred.size() != target.size()) {
    fail(Errc::length_mismatch, "pred length " + std::to_string(pred.size()) +
                                    " != target length " +
                                    std::to_string(target.size()));
  }
  double sum = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double r = pred[i] - target[i];
    sum += r * r;
  }
  return 0.5 * sum;
}

std::vector<double> mse_grad(const std::vector<double>& pred,
                             const std::vector<double>& target,
                             const std::vector<double>& input) {
  if (pred.size() != target.size()) {
    fail(Errc::shape_mismatch, "pred/target length mismatch");
  }
  std::vector<double> grad(pred.size() * input.size());
  for (size_t j = 0; j < pred.size(); ++j) {
    double e = pred[j] - target[j];
    for (size_t i = 0; i < input.size(); ++i) {
      grad[j * input.size() + i] = e * input[i];
    }
  }
  return grad;
}

namespace {

nlohmann::json config_to_json(const ClassifierConfig& c) {
  nlohmann::json doc;
  doc["input_length"] = c.input_length;
  doc["channels"] = c.channels;
  doc["conv"] = nlohmann::json::array();
  for (const ConvLayerSpec& layer : c.conv) {
    doc["conv"].push_back({{"filters", layer.filters},
                           {"kernel", layer.kernel},
                           {"pool", layer.pool}});
  }
  doc["dense"] = c.dense;
  doc["loss"] = c.loss == LossKind::cross_entropy ? "cross-entropy" : "mse";
  doc["lr"] = c.lr;
  doc["epochs"] = c.epochs;
  doc["batch_size"] = c.batch_size;
  doc["seed"] = c.seed;
  doc["threshold"] = c.threshold;
  return doc;
}

ClassifierConfig config_from_json(const nlohmann::json& doc) {
  ClassifierConfig c;
  c.conv.clear();
  c.input_length = doc.at("input_length").get<uint32_t>();
  c.channels = doc.at("channels").get<uint32_t>();
  for (const auto& layer : doc.at("conv")) {
    c.conv.push_back({layer.at("filters").get<uint32_t>(),
                      layer.at("kernel").get<uint32_t>(),
                      layer.at("pool").get<uint32_t>()});
  }
  c.dense = doc.at("dense").get<std::vector<uint32_t>>();
  std::string loss = doc.at("loss").get<std::string>();
  if (loss == "cross-entropy") {
    c.loss = LossKind::cross_entropy;
  } else if (loss == "mse") {
    c.loss = LossKind::mse;
  } else {
    fail(Errc::parse_error, "unknown loss \"" + loss + "\"");
  }
  c.lr = doc.at("lr").get<double>();
  c.epochs = doc.at("epochs").get<uint32_t>();
  c.batch_size = doc.at("batch_size").get<uint32_t>();
  c.seed = doc.at("seed").get<uint64_t>();
  c.threshold = doc.at("threshold").get<double>();
  return c;
}

}  // namespace

void ClassifierModel::save(const std::filesystem::path& path) const {
  std::vector<uint8_t> out;
  out.insert(out.end(), {'O', '2', 'V', 'C'});
  append_u16le(out, 1);
  std::string config_json = config_to_json(config_).dump();
  append_u32le(out, static_cast<uint32_t>(config_json.size()));
  out.insert(out.end(), config_json.begin(), config_json.end());

  // Tensor shapes in block order.
  std::vector<std::vector<uint32_t>> shapes;
  size_t channels = config_.channels;
  for (const ConvLayerSpec& layer : config_.conv) {
    shapes.push_back({layer.filters, static_cast<uint32_t>(channels),
                      layer.kernel});
    shapes.push_back({layer.filters});
    channels = layer.filters;
  }
  size_t width = global_pool_width(config_);
  for (uint32_t dense_width : config_.dense) {
    shapes.push_back({dense_width, static_cast<uint32_t>(width)});
    shapes.push_back({dense_width});
    width = dense_width;
  }
  shapes.push_back({1, static_cast<uint32_t>(width)});
  shapes.push_back({1});

  append_u32le(out, static_cast<uint32_t>(shapes.size()));
  for (size_t b = 0; b < shapes.size(); ++b) {
    append_u32le(out, static_cast<uint32_t>(shapes[b].size()));
    size_t count = 1;
    for (uint32_t dim : shapes[b]) {
      append_u32le(out, dim);
      count *= dim;
    }
    if (count != block_sizes_[b]) {
      fail(Errc::shape_mismatch, "tensor block size inconsistency");
    }
    const double* p = &params_[block_offsets_[b]];
    for (size_t i = 0; i < count; ++i) {
      append_f32le(out, static_cast<float>(p[i]));
    }
  }
  write_file(path, out);
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "O2VC", 4) != 0) {
    fail(Errc::bad_magic, path.string() + ": not an O2VC file");
  }
  size_t pos = 4;
  auto need = [&](size_t n, const char* what) {
    if (pos + n > bytes.size()) {
      fail(Errc::truncated_file, path.string() + ": truncated in " + what);
    }
  };
  need(6, "header");
  uint16_t version = read_u16le(&bytes[pos]);
  pos += 2;
  if (version != 1) {
    fail(Errc::unsupported_version,
         path.string() + ": O2VC version " + std::to_string(version));
  }
  uint32_t json_len = read_u32le(&bytes[pos]);
  pos += 4;
  need(json_len, "config");
  std::string config_json(reinterpret_cast<const char*>(&bytes[pos]),
                          json_len);
  pos += json_len;

  ClassifierConfig config;
  try {
    config = config_from_json(nlohmann::json::parse(config_json));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, path.string() + ": bad config JSON: " + e.what());
  }

  ClassifierModel model(config);
  need(4, "tensor count");
  uint32_t tensor_count = read_u32le(&bytes[pos]);
  pos += 4;
  if (tensor_count != model.block_offsets_.size()) {
    fail(Errc::corrupt_record,
         path.string() + ": tensor count " + std::to_string(tensor_count) +
             " does not match the config");
  }
  for (uint32_t b = 0; b < tensor_count; ++b) {
    need(4, "tensor rank");
    uint32_t rank = read_u32le(&bytes[pos]);
    pos += 4;
    need(rank * 4, "tensor dims");
    size_t count = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      count *= read_u32le(&bytes[pos]);
      pos += 4;
    }
    if (count != model.block_sizes_[b]) {
      fail(Errc::corrupt_record, path.string() + ": tensor " +
                                     std::to_string(b) + " has " +
                                     std::to_string(count) + " values, " +
                                     std::to_string(model.block_sizes_[b]) +
                                     " expected");
    }
    need(count * 4, "tensor data");
    double* p = &model.params_[model.block_offsets_[b]];
    for (size_t i = 0; i < count; ++i) {
      p[i] = read_f32le(&bytes[pos]);
      pos += 4;
    }
  }
  if (pos != bytes.size()) {
    fail(Errc::truncated_file, path.string() + ": trailing bytes");
  }
  return model;
}

namespace {

Metrics evaluate_frames(const ClassifierModel& model,
                        const std::vector<std::vector<double>>& frames,
                        const std::vector<int>& labels, double threshold) {
  uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (size_t i = 0; i < frames.size(); ++i) {
    bool predicted = model.probability(frames[i]) > threshold;
    if (labels[i] == 1) {
      (predicted ? tp : fn) += 1;
    } else {
      (predicted ? fp : tn) += 1;
    }
  }
  return Metrics::from_counts(tp, fp, tn, fn);
}

}  // namespace

TrainClassifierResult train_classifier(
    const std::vector<EmbeddedProgram>& records,
    const ClassifierConfig& config) {
  config.validate();
  if (records.empty()) {
    fail(Errc::empty_dataset, "no records to train on");
  }
  for (const EmbeddedProgram& r : records) {
    if (r.dim != config.channels) {
      fail(Errc::shape_mismatch,
           r.source + ": record dim " + std::to_string(r.dim) +
               " != configured channels " + std::to_string(config.channels));
    }
  }

  // Stratified 80/20 split, seeded.
  std::vector<size_t> by_class[2];
  for (size_t i = 0; i < records.size(); ++i) {
    by_class[records[i].label == 1 ? 1 : 0].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) {
    fail(Errc::single_class_dataset,
         "training needs both benign and malicious records");
  }
  std::mt19937_64 rng(config.seed);
  std::vector<size_t> train_idx, test_idx;
  for (auto& cls : by_class) {
    std::shuffle(cls.begin(), cls.end(), rng);
    size_t held_out = cls.size() / 5;
    test_idx.insert(test_idx.end(), cls.begin(), cls.begin() + held_out);
    train_idx.insert(train_idx.end(), cls.begin() + held_out, cls.end());
  }

  auto make_frames = [&](const std::vector<size_t>& idx,
                         std::vector<std::vector<double>>& frames,
                         std::vector<int>& labels) {
    frames.reserve(idx.size());
    labels.reserve(idx.size());
    for (size_t i : idx) {
      frames.push_back(pad_or_truncate(records[i], config.input_length));
      labels.push_back(records[i].label);
    }
  };
  std::vector<std::vector<double>> train_frames, test_frames;
  std::vector<int> train_labels, test_labels;
  make_frames(train_idx, train_frames, train_labels);
  make_frames(test_idx, test_frames, test_labels);

  ClassifierModel model = ClassifierModel::init(config, config.seed);
  std::vector<double> grad(model.parameters().size());
  std::vector<size_t> order(train_frames.size());
  for (size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }

  TrainClassifierResult result{std::move(model), {}};
  result.epochs.reserve(config.epochs);

  for (uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      size_t end = std::min(order.size(),
                            start + static_cast<size_t>(config.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      for (size_t i = start; i < end; ++i) {
        double loss = result.model.accumulate_gradient(
            train_frames[order[i]], train_labels[order[i]], grad);
        if (!std::isfinite(loss)) {
          fail(Errc::non_finite_loss,
               "epoch " + std::to_string(epoch) + " sample " +
                   std::to_string(i) + ": loss diverged");
        }
        loss_sum += loss;
      }
      double scale = config.lr / static_cast<double>(end - start);
      std::vector<double>& params = result.model.parameters();
      for (size_t p = 0; p < params.size(); ++p) {
        params[p] -= scale * grad[p];
      }
    }

    EpochReport report;
    report.mean_train_loss =
        loss_sum / static_cast<double>(train_frames.size());
    // Tiny datasets may hold nothing out; report on the training split then.
    if (!test_frames.empty()) {
      report.held_out = evaluate_frames(result.model, test_frames,
                                        test_labels, config.threshold);
    } else {
      report.held_out = evaluate_frames(result.model, train_frames,
                                        train_labels, config.threshold);
    }
    result.epochs.push_back(std::move(report));
  }
  return result;
}

Metrics evaluate(const ClassifierModel& model,
                 const std::vector<EmbeddedProgram>& records,
                 double threshold) {
  if (records.empty()) {
    fail(Errc::empty_dataset, "nothing to evaluate");
  }
  uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const EmbeddedProgram& r : records) {
    bool predicted = forward_pass(model, r) > threshold;
    if (r.label == 1) {
      (predicted ? tp : fn) += 1;
    } else {
      (predicted ? fp : tn) += 1;
    }
  }
  return Metrics::from_counts(tp, fp, tn, fn);
}

}  // namespace op2vec
