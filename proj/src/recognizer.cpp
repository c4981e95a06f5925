#include "palmar/recognizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "palmar/rng.hpp"

namespace palmar {

using nn::Tensor3;

RecognizerParams RecognizerParams::init(const RecognizerConfig& config) {
  auto rng = make_rng(config.seed, 100);
  RecognizerParams p;
  p.config = config;
  p.conv1 = nn::Conv2d::make(config.conv1_channels, config.input_frames, config.kernel, rng);
  p.conv2 = nn::Conv2d::make(config.conv2_channels, config.conv1_channels, config.kernel, rng);

  const int c1 = config.crop - config.kernel + 1;      // conv1 out
  const int p1 = c1 / 2;                               // pool1 out
  const int c2 = p1 - config.kernel + 1;               // conv2 out
  const int p2 = c2 / 2;                               // pool2 out
  if (p2 <= 0) throw ValidationError("recognizer: crop too small for the conv stack");
  const int flat = config.conv2_channels * p2 * p2;

  p.dense1 = nn::Dense::make(config.dense1, flat, rng);
  p.dense2 = nn::Dense::make(config.dense2, config.dense1, rng);
  p.dense_out = nn::Dense::make(config.classes, config.dense2, rng);
  return p;
}

void RecognizerParams::collect(std::vector<double*>& params, std::vector<double*>& grads) {
  conv1.collect(params, grads);
  conv2.collect(params, grads);
  dense1.collect(params, grads);
  dense2.collect(params, grads);
  dense_out.collect(params, grads);
}

namespace {

struct Trace {
  Tensor3 x;            // input
  Tensor3 c1, r1, p1;   // conv1 -> relu -> pool
  Tensor3 c2, r2, p2;
  std::vector<Eigen::MatrixXi> am1, am2;
  VecX flat;
  VecX d1_pre, d1, d2_pre, d2, logits, probs;
};

Tensor3 relu3(const Tensor3& x) {
  Tensor3 out(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) out[c] = x[c].cwiseMax(0.0);
  return out;
}

Tensor3 relu3_backward(const Tensor3& x, const Tensor3& dy) {
  Tensor3 out(x.size());
  for (std::size_t c = 0; c < x.size(); ++c)
    out[c] = (x[c].array() > 0.0).select(dy[c], MatX::Zero(dy[c].rows(), dy[c].cols()));
  return out;
}

Trace run_forward(const Tensor3& input, const RecognizerParams& p) {
  Trace tr;
  tr.x = input;
  tr.c1 = p.conv1.forward(tr.x);
  tr.r1 = relu3(tr.c1);
  tr.p1 = nn::MaxPool2::forward(tr.r1, &tr.am1);
  tr.c2 = p.conv2.forward(tr.p1);
  tr.r2 = relu3(tr.c2);
  tr.p2 = nn::MaxPool2::forward(tr.r2, &tr.am2);
  tr.flat = nn::flatten(tr.p2);
  tr.d1_pre = p.dense1.forward(tr.flat);
  tr.d1 = nn::relu(tr.d1_pre);
  tr.d2_pre = p.dense2.forward(tr.d1);
  tr.d2 = nn::relu(tr.d2_pre);
  tr.logits = p.dense_out.forward(tr.d2);
  tr.probs = nn::softmax(tr.logits);
  return tr;
}

void validate_input(const Tensor3& input, const RecognizerConfig& cfg) {
  if (static_cast<int>(input.size()) != cfg.input_frames)
    throw ValidationError("recognizer: wrong channel count");
  for (const MatX& c : input)
    if (c.rows() != cfg.crop || c.cols() != cfg.crop)
      throw ValidationError("recognizer: wrong crop shape");
}

// Accumulates gradients for one sample; returns its loss.
double backprop_sample(const Sample& s, RecognizerParams& p) {
  Trace tr = run_forward(s.input, p);
  double loss = nn::cross_entropy(tr.probs, s.label);

  // softmax + cross-entropy
  VecX dlogits = tr.probs;
  dlogits[s.label] -= 1.0;

  VecX dd2 = p.dense_out.backward(tr.d2, dlogits);
  dd2 = nn::relu_backward(tr.d2_pre, dd2);
  VecX dd1 = p.dense2.backward(tr.d1, dd2);
  dd1 = nn::relu_backward(tr.d1_pre, dd1);
  VecX dflat = p.dense1.backward(tr.flat, dd1);

  const int ch = static_cast<int>(tr.p2.size());
  Tensor3 dp2 = nn::unflatten(dflat, ch, static_cast<int>(tr.p2[0].rows()),
                              static_cast<int>(tr.p2[0].cols()));
  Tensor3 dr2 = nn::MaxPool2::backward(dp2, tr.am2, static_cast<int>(tr.r2[0].rows()),
                                       static_cast<int>(tr.r2[0].cols()));
  Tensor3 dc2 = relu3_backward(tr.c2, dr2);
  Tensor3 dp1 = p.conv2.backward(tr.p1, dc2);
  Tensor3 dr1 = nn::MaxPool2::backward(dp1, tr.am1, static_cast<int>(tr.r1[0].rows()),
                                       static_cast<int>(tr.r1[0].cols()));
  Tensor3 dc1 = relu3_backward(tr.c1, dr1);
  p.conv1.backward(tr.x, dc1);
  return loss;
}

void zero_grads(RecognizerParams& p) {
  p.conv1.zero_grad();
  p.conv2.zero_grad();
  p.dense1.zero_grad();
  p.dense2.zero_grad();
  p.dense_out.zero_grad();
}

void scale_grads(RecognizerParams& p, double s) {
  auto scale_conv = [s](nn::Conv2d& c) {
    for (auto& row : c.gK)
      for (MatX& g : row) g *= s;
    c.gb *= s;
  };
  scale_conv(p.conv1);
  scale_conv(p.conv2);
  p.dense1.gW *= s;
  p.dense1.gb *= s;
  p.dense2.gW *= s;
  p.dense2.gb *= s;
  p.dense_out.gW *= s;
  p.dense_out.gb *= s;
}

void step(RecognizerParams& p, double lr, double momentum) {
  p.conv1.sgd_step(lr, momentum);
  p.conv2.sgd_step(lr, momentum);
  p.dense1.sgd_step(lr, momentum);
  p.dense2.sgd_step(lr, momentum);
  p.dense_out.sgd_step(lr, momentum);
}

}  // namespace

VecX forward(const Sample& sample, const RecognizerParams& params) {
  validate_input(sample.input, params.config);
  return run_forward(sample.input, params).probs;
}

TrainResult train(const std::vector<Sample>& samples, const RecognizerConfig& config) {
  if (samples.empty()) throw ValidationError("train: no samples");
  std::vector<char> seen(static_cast<std::size_t>(config.classes), 0);
  for (const Sample& s : samples) {
    if (s.label < 0 || s.label >= config.classes)
      throw ValidationError("train: label outside the class set");
    seen[static_cast<std::size_t>(s.label)] = 1;
    validate_input(s.input, config);
  }
  if (std::count(seen.begin(), seen.end(), 1) < config.classes)
    throw ValidationError("train: every class needs at least one sample");

  TrainResult result;
  result.params = RecognizerParams::init(config);
  RecognizerParams& p = result.params;

  auto shuffle_rng = make_rng(config.seed, 101);
  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(config.batch)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(config.batch));
      zero_grads(p);
      for (std::size_t k = at; k < end; ++k)
        epoch_loss += backprop_sample(samples[static_cast<std::size_t>(order[k])], p);
      scale_grads(p, 1.0 / static_cast<double>(end - at));
      step(p, config.lr, config.momentum);
    }
    epoch_loss /= static_cast<double>(samples.size());
    if (!std::isfinite(epoch_loss))
      throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
    result.loss_history.push_back(epoch_loss);
  }
  p.trained = true;
  return result;
}

std::pair<int, double> predict_activity(const Tensor3& window, const RecognizerParams& params) {
  if (!params.trained) throw ValidationError("predict_activity: model is untrained");
  validate_input(window, params.config);
  VecX probs = run_forward(window, params).probs;
  int best = 0;
  for (int k = 1; k < probs.size(); ++k)
    if (probs[k] > probs[best]) best = k;  // ties keep the lowest index
  return {best, probs[best]};
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json mat_json(const MatX& m) {
  json rows = json::array();
  for (long i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (long j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatX mat_from(const json& j) {
  const long rows = static_cast<long>(j.size());
  const long cols = rows > 0 ? static_cast<long>(j.at(0).size()) : 0;
  MatX m(rows, cols);
  for (long i = 0; i < rows; ++i) {
    if (static_cast<long>(j.at(static_cast<std::size_t>(i)).size()) != cols)
      throw ValidationError("checkpoint: ragged matrix");
    for (long jj = 0; jj < cols; ++jj)
      m(i, jj) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(jj)).get<double>();
  }
  return m;
}

json vec_json(const VecX& v) {
  json arr = json::array();
  for (long i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

VecX vec_from(const json& j) {
  VecX v(static_cast<long>(j.size()));
  for (long i = 0; i < v.size(); ++i) v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

json conv_json(const nn::Conv2d& c) {
  json kernels = json::array();
  for (const auto& row : c.K) {
    json r = json::array();
    for (const MatX& k : row) r.push_back(mat_json(k));
    kernels.push_back(std::move(r));
  }
  return json{{"in", c.in_channels}, {"out", c.out_channels}, {"kernel", c.kernel},
              {"K", std::move(kernels)}, {"b", vec_json(c.b)}};
}

void conv_from(const json& j, nn::Conv2d& c) {
  const int in = j.at("in").get<int>();
  const int out = j.at("out").get<int>();
  const int kernel = j.at("kernel").get<int>();
  if (c.in_channels != in || c.out_channels != out || c.kernel != kernel)
    throw ValidationError("checkpoint: conv shape mismatch");
  const auto& kernels = j.at("K");
  for (int o = 0; o < out; ++o)
    for (int i = 0; i < in; ++i) {
      MatX k = mat_from(kernels.at(static_cast<std::size_t>(o)).at(static_cast<std::size_t>(i)));
      if (k.rows() != kernel || k.cols() != kernel)
        throw ValidationError("checkpoint: kernel shape mismatch");
      c.K[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)] = std::move(k);
    }
  VecX b = vec_from(j.at("b"));
  if (b.size() != c.b.size()) throw ValidationError("checkpoint: conv bias shape mismatch");
  c.b = std::move(b);
}

json dense_json(const nn::Dense& d) {
  return json{{"W", mat_json(d.W)}, {"b", vec_json(d.b)}};
}

void dense_from(const json& j, nn::Dense& d) {
  MatX W = mat_from(j.at("W"));
  VecX b = vec_from(j.at("b"));
  if (W.rows() != d.W.rows() || W.cols() != d.W.cols() || b.size() != d.b.size())
    throw ValidationError("checkpoint: dense shape mismatch");
  d.W = std::move(W);
  d.b = std::move(b);
}

}  // namespace

void save_recognizer(const RecognizerParams& p, const std::string& path) {
  json j{{"format", "palmar-recognizer"},
         {"version", 1},
         {"config",
          {{"input_frames", p.config.input_frames},
           {"crop", p.config.crop},
           {"conv1_channels", p.config.conv1_channels},
           {"conv2_channels", p.config.conv2_channels},
           {"kernel", p.config.kernel},
           {"dense1", p.config.dense1},
           {"dense2", p.config.dense2},
           {"classes", p.config.classes},
           {"class_names", p.config.class_names}}},
         {"trained", p.trained},
         {"conv1", conv_json(p.conv1)},
         {"conv2", conv_json(p.conv2)},
         {"dense1", dense_json(p.dense1)},
         {"dense2", dense_json(p.dense2)},
         {"dense_out", dense_json(p.dense_out)}};
  std::ofstream out(path);
  if (!out) throw ValidationError("save_recognizer: cannot open " + path);
  out << j.dump(2) << '\n';
}

RecognizerParams load_recognizer(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("load_recognizer: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("load_recognizer: ") + e.what());
  }
  if (j.value("format", "") != "palmar-recognizer" || j.value("version", 0) != 1)
    throw ValidationError("load_recognizer: unknown checkpoint format/version");

  RecognizerConfig cfg;
  const auto& cj = j.at("config");
  cfg.input_frames = cj.at("input_frames").get<int>();
  cfg.crop = cj.at("crop").get<int>();
  cfg.conv1_channels = cj.at("conv1_channels").get<int>();
  cfg.conv2_channels = cj.at("conv2_channels").get<int>();
  cfg.kernel = cj.at("kernel").get<int>();
  cfg.dense1 = cj.at("dense1").get<int>();
  cfg.dense2 = cj.at("dense2").get<int>();
  cfg.classes = cj.at("classes").get<int>();
  cfg.class_names = cj.value("class_names", std::vector<std::string>{});

  RecognizerParams p = RecognizerParams::init(cfg);
  conv_from(j.at("conv1"), p.conv1);
  conv_from(j.at("conv2"), p.conv2);
  dense_from(j.at("dense1"), p.dense1);
  dense_from(j.at("dense2"), p.dense2);
  dense_from(j.at("dense_out"), p.dense_out);
  p.trained = j.value("trained", false);
  return p;
}

// ---------------------------------------------------------------------------
// Sample building
// ---------------------------------------------------------------------------

std::vector<Sample> build_activity_samples(const std::vector<Frame>& frames,
                                           const GroundTruth& truth,
                                           const std::vector<std::string>& class_names,
                                           const SampleBuildConfig& config) {
  if (frames.size() != truth.size())
    throw ValidationError("build_activity_samples: frame/truth length mismatch");

  auto class_index = [&](const std::string& name) {
    for (std::size_t k = 0; k < class_names.size(); ++k)
      if (class_names[k] == name) return static_cast<int>(k);
    return -1;
  };

  // Person id -> frames where present.
  std::map<int, std::vector<int>> presence;
  for (std::size_t f = 0; f < truth.size(); ++f)
    for (const PersonTruth& p : truth[f].persons) presence[p.id].push_back(static_cast<int>(f));

  auto person_at = [&](int frame, int id) -> const PersonTruth* {
    for (const PersonTruth& p : truth[static_cast<std::size_t>(frame)].persons)
      if (p.id == id) return &p;
    return nullptr;
  };

  std::vector<Sample> samples;
  const int T = config.frames;
  const double half = 0.5 * config.crop * config.cell;

  for (const auto& [id, at_frames] : presence) {
    if (static_cast<int>(at_frames.size()) < T) continue;
    for (std::size_t w = 0; w + static_cast<std::size_t>(T) <= at_frames.size();
         w += static_cast<std::size_t>(config.stride)) {
      // Require T consecutive frames and a stable activity.
      bool ok = true;
      for (int k = 1; k < T; ++k)
        if (at_frames[w + static_cast<std::size_t>(k)] != at_frames[w] + k) {
          ok = false;
          break;
        }
      if (!ok) continue;
      const PersonTruth* first = person_at(at_frames[w], id);
      const PersonTruth* last = person_at(at_frames[w] + T - 1, id);
      if (!first || !last || first->activity != last->activity) continue;
      int label = class_index(first->activity);
      if (label < 0) continue;

      const Vec2 center = first->head.head<2>();
      Sample s;
      s.label = label;
      s.input.resize(static_cast<std::size_t>(T));
      for (int k = 0; k < T; ++k) {
        MatX occ = MatX::Zero(config.crop, config.crop);
        const Frame& fr = frames[static_cast<std::size_t>(at_frames[w] + k)];
        for (const Vec3& p : fr.points) {
          double gx = (p.x() - (center.x() - half)) / config.cell;
          double gy = (p.y() - (center.y() - half)) / config.cell;
          int i = static_cast<int>(std::floor(gy));
          int jx = static_cast<int>(std::floor(gx));
          if (i >= 0 && i < config.crop && jx >= 0 && jx < config.crop) occ(i, jx) = 1.0;
        }
        s.input[static_cast<std::size_t>(k)] = std::move(occ);
      }
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

}  // namespace palmar
