#include "perq/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <sstream>

#include "perq/digest.hpp"
#include "perq/error.hpp"
#include "perq/io.hpp"
#include "perq/rng.hpp"
#include "perq/text.hpp"

namespace perq {

void FeatureConfig::validate() const {
  if (ngram_min < 1 || ngram_max < ngram_min) throw ValidationError("features: invalid n-gram range");
  if (hash_dim == 0) throw ValidationError("features: hash_dim must be > 0");
}

void Hyperparams::validate() const {
  if (!(lr > 0) || !std::isfinite(lr)) throw ValidationError("hyperparams: lr must be > 0");
  if (!(l2 >= 0) || !std::isfinite(l2)) throw ValidationError("hyperparams: l2 must be >= 0");
  if (epochs < 0) throw ValidationError("hyperparams: epochs must be >= 0");
  if (batch < 1) throw ValidationError("hyperparams: batch must be >= 1");
}

SparseVector featurize(std::string_view text, const FeatureConfig& cfg) {
  const auto cps = normalize_for_features(text);
  std::map<std::uint32_t, double> counts;
  std::string gram;
  for (int n = cfg.ngram_min; n <= cfg.ngram_max; ++n) {
    if (cps.size() < static_cast<std::size_t>(n)) break;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= cps.size(); ++i) {
      gram.clear();
      for (int k = 0; k < n; ++k) utf8_append(gram, cps[i + static_cast<std::size_t>(k)]);
      counts[static_cast<std::uint32_t>(fnv1a64(gram) % cfg.hash_dim)] += 1.0;
    }
  }
  double norm = 0.0;
  for (const auto& [b, c] : counts) norm += c * c;
  norm = std::sqrt(norm);
  SparseVector out;
  out.reserve(counts.size());
  for (const auto& [b, c] : counts) out.emplace_back(b, c / norm);
  return out;
}

BaselineModel BaselineModel::zeros(const FeatureConfig& features, int label_count) {
  features.validate();
  if (label_count < 2) throw ValidationError("model: need at least 2 labels");
  BaselineModel m;
  m.features = features;
  m.label_count = label_count;
  m.weights.assign(static_cast<std::size_t>(label_count) * features.hash_dim, 0.0);
  m.bias.assign(static_cast<std::size_t>(label_count), 0.0);
  return m;
}

bool BaselineModel::finite() const {
  auto ok = [](double v) { return std::isfinite(v); };
  return std::all_of(weights.begin(), weights.end(), ok) && std::all_of(bias.begin(), bias.end(), ok);
}

std::vector<double> class_probabilities(const BaselineModel& model, const SparseVector& x) {
  std::vector<double> z(model.bias);
  for (int l = 0; l < model.label_count; ++l) {
    for (const auto& [b, v] : x) z[static_cast<std::size_t>(l)] += model.w(l, b) * v;
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (auto& v : z) v /= sum;
  return z;
}

double objective(const BaselineModel& model, std::span<const SparseVector> xs, std::span<const int> ys, double l2,
                 Gradient* grad) {
  if (xs.size() != ys.size() || xs.empty()) throw ValidationError("objective: need equal nonempty inputs");
  if (grad) {
    grad->weights.assign(model.weights.size(), 0.0);
    grad->bias.assign(model.bias.size(), 0.0);
  }
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto p = class_probabilities(model, xs[i]);
    loss -= std::log(std::max(p[static_cast<std::size_t>(ys[i])], 1e-300));
    if (!grad) continue;
    for (int l = 0; l < model.label_count; ++l) {
      const double delta = (p[static_cast<std::size_t>(l)] - (l == ys[i] ? 1.0 : 0.0)) * inv_n;
      grad->bias[static_cast<std::size_t>(l)] += delta;
      double* row = grad->weights.data() + static_cast<std::size_t>(l) * model.features.hash_dim;
      for (const auto& [b, v] : xs[i]) row[b] += delta * v;
    }
  }
  loss *= inv_n;
  double sq = 0.0;
  for (std::size_t k = 0; k < model.weights.size(); ++k) {
    sq += model.weights[k] * model.weights[k];
    if (grad) grad->weights[k] += l2 * model.weights[k];
  }
  return loss + 0.5 * l2 * sq;
}

namespace {

int argmax_lowest(const std::vector<double>& p) {
  int best = 0;
  for (int l = 1; l < static_cast<int>(p.size()); ++l) {
    if (p[static_cast<std::size_t>(l)] > p[static_cast<std::size_t>(best)]) best = l;
  }
  return best;
}

struct Featurized {
  std::vector<SparseVector> xs;
  std::vector<int> ys;
};

Featurized featurize_rows(const std::vector<SplitRow>& rows, const FeatureConfig& cfg, int num_labels,
                          std::string_view which) {
  if (rows.empty()) throw ValidationError("EmptySet", std::string(which) + " set is empty");
  Featurized f;
  f.xs.reserve(rows.size());
  f.ys.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.label < 0 || r.label >= num_labels) {
      throw ValidationError("LabelOutOfRange", std::string(which) + " row '" + r.id + "': label " + std::to_string(r.label));
    }
    f.xs.push_back(featurize(r.text, cfg));
    f.ys.push_back(r.label);
  }
  return f;
}

std::pair<double, double> loss_and_accuracy(const BaselineModel& model, const Featurized& data) {
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.xs.size(); ++i) {
    const auto p = class_probabilities(model, data.xs[i]);
    loss -= std::log(std::max(p[static_cast<std::size_t>(data.ys[i])], 1e-300));
    if (argmax_lowest(p) == data.ys[i]) ++correct;
  }
  const auto n = static_cast<double>(data.xs.size());
  return {loss / n, static_cast<double>(correct) / n};
}

}  // namespace

TrainResult train_baseline(const std::vector<SplitRow>& train, const std::vector<SplitRow>& val, int num_labels,
                           const Hyperparams& hp, const FeatureConfig& features) {
  hp.validate();
  const auto tr = featurize_rows(train, features, num_labels, "train");
  const auto va = featurize_rows(val, features, num_labels, "val");

  TrainResult result{BaselineModel::zeros(features, num_labels), {}};
  auto& model = result.model;
  auto log_epoch = [&](int epoch) {
    const auto [train_loss, train_acc] = loss_and_accuracy(model, tr);
    const auto [val_loss, val_acc] = loss_and_accuracy(model, va);
    (void)train_acc;
    result.log.push_back(EpochLog{epoch, train_loss, val_loss, val_acc});
  };
  log_epoch(0);

  std::vector<std::size_t> order(tr.xs.size());
  std::vector<double> probs;
  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng::keyed(hp.shuffle_seed, "epoch:" + std::to_string(epoch));
    rng.shuffle(order);

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hp.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hp.batch));
      const double step = hp.lr / static_cast<double>(end - start);

      // Probabilities for the whole batch are taken at the pre-update weights.
      std::vector<std::vector<double>> batch_probs;
      batch_probs.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) batch_probs.push_back(class_probabilities(model, tr.xs[order[k]]));

      // W <- W - lr * (mean data gradient + l2 * W)
      if (hp.l2 > 0) {
        const double decay = 1.0 - hp.lr * hp.l2;
        for (auto& w : model.weights) w *= decay;
      }
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const auto& p = batch_probs[k - start];
        for (int l = 0; l < num_labels; ++l) {
          const double delta = p[static_cast<std::size_t>(l)] - (l == tr.ys[i] ? 1.0 : 0.0);
          model.bias[static_cast<std::size_t>(l)] -= step * delta;
          for (const auto& [b, v] : tr.xs[i]) model.w(l, b) -= step * delta * v;
        }
      }
    }
    model.trained_epochs = epoch;
    log_epoch(epoch);
  }
  if (!model.finite()) throw DataError("NonFiniteModel", "training diverged; lower the learning rate");
  return result;
}

Prediction predict_one(const BaselineModel& model, std::string id, std::string_view text) {
  auto p = class_probabilities(model, featurize(text, model.features));
  const int label = argmax_lowest(p);
  return Prediction{std::move(id), label, std::move(p)};
}

std::vector<Prediction> predict(const BaselineModel& model, const std::vector<SplitRow>& rows) {
  if (!model.finite()) throw ValidationError("predict: model has non-finite weights");
  std::vector<Prediction> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(predict_one(model, r.id, r.text));
  return out;
}

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_loss,val_loss,val_accuracy\n";
  for (const auto& e : log) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_accuracy << '\n';
  return out.str();
}

namespace {

constexpr char kMagic[8] = {'P', 'E', 'R', 'Q', 'B', 'L', 'M', '\0'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, sizeof v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::string_view data, std::string origin) : data_(data), origin_(std::move(origin)) {}
  std::string_view take(std::size_t n) {
    if (pos_ + n > data_.size()) throw ParseError(origin_ + ": truncated model file");
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    const auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
    return v;
  }
  double f64() {
    const auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
    double d;
    std::memcpy(&d, &v, sizeof d);
    return d;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_model(const std::filesystem::path& path, const BaselineModel& model) {
  const json header{{"ngram_min", model.features.ngram_min},
                    {"ngram_max", model.features.ngram_max},
                    {"hash_dim", model.features.hash_dim},
                    {"hash", "fnv1a64"},
                    {"label_count", model.label_count},
                    {"trained_epochs", model.trained_epochs}};
  const auto header_text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, BaselineModel::kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  out.reserve(out.size() + 8 * (model.weights.size() + model.bias.size()) + 64);
  for (double w : model.weights) put_f64(out, w);
  for (double b : model.bias) put_f64(out, b);
  out += sha256_hex(out);
  write_file_atomic(path, out);
}

BaselineModel load_model(const std::filesystem::path& path) {
  const auto data = read_file(path);
  if (data.size() < sizeof kMagic + 8 + 64) throw ParseError(path.string() + ": not a model file");
  const std::string_view body(data.data(), data.size() - 64);
  if (sha256_hex(body) != std::string_view(data).substr(data.size() - 64)) {
    throw ParseError(path.string() + ": content digest mismatch");
  }
  Reader r(body, path.string());
  if (r.take(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw ParseError(path.string() + ": bad magic");
  }
  const auto version = r.u32();
  if (version != BaselineModel::kFormatVersion) {
    throw ParseError(path.string() + ": format_version " + std::to_string(version) + " unsupported");
  }
  const auto header_len = r.u32();
  json header;
  try {
    header = json::parse(r.take(header_len));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": header: " + e.what());
  }
  FeatureConfig fc;
  fc.ngram_min = header.at("ngram_min").get<int>();
  fc.ngram_max = header.at("ngram_max").get<int>();
  fc.hash_dim = header.at("hash_dim").get<std::uint32_t>();
  auto model = BaselineModel::zeros(fc, header.at("label_count").get<int>());
  model.trained_epochs = header.at("trained_epochs").get<int>();
  for (auto& w : model.weights) w = r.f64();
  for (auto& b : model.bias) b = r.f64();
  if (r.pos() != body.size()) throw ParseError(path.string() + ": trailing bytes in model file");
  return model;
}

}  // namespace perq
