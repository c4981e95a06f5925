#include "palmar/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "palmar/rng.hpp"

namespace palmar {

using nn::Dense;

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

std::vector<std::string> DomainData::validate() const {
  if (x_source.rows() != y_source.size())
    throw ValidationError("DomainData: source rows/labels mismatch");
  if (x_target_labeled.rows() != y_target_labeled.size())
    throw ValidationError("DomainData: target rows/labels mismatch");
  if (x_source.rows() == 0) throw ValidationError("DomainData: empty source set");

  std::vector<std::string> warnings;
  const double n_l = std::max<double>(1.0, x_target_labeled.rows());
  if (x_source.rows() / n_l < 5.0)
    warnings.push_back("source/labeled-target ratio below 5; adaptation assumes n_s >> n_l");
  if (x_target_unlabeled.rows() / n_l < 5.0)
    warnings.push_back("unlabeled/labeled target ratio below 5; adaptation assumes n_u >> n_l");
  return warnings;
}

// ---------------------------------------------------------------------------
// VAE primitives
// ---------------------------------------------------------------------------

VaeParams VaeParams::init(int d_in, int hidden, int d_z, std::mt19937_64& rng) {
  VaeParams v;
  v.d_in = d_in;
  v.d_z = d_z;
  v.enc_h = Dense::make(hidden, d_in, rng);
  v.enc_mu = Dense::make(d_z, hidden, rng);
  v.enc_s = Dense::make(d_z, hidden, rng);
  v.dec_h = Dense::make(hidden, d_z, rng);
  v.dec_out = Dense::make(d_in, hidden, rng);
  return v;
}

void VaeParams::collect(std::vector<double*>& params, std::vector<double*>& grads) {
  enc_h.collect(params, grads);
  enc_mu.collect(params, grads);
  enc_s.collect(params, grads);
  dec_h.collect(params, grads);
  dec_out.collect(params, grads);
}

EncodeResult encode(const VecX& x, const VaeParams& vae, std::mt19937_64& rng, bool sample) {
  if (x.size() != vae.d_in) throw ValidationError("encode: input dimension mismatch");
  EncodeResult r;
  VecX h = nn::relu(vae.enc_h.forward(x));
  r.mu = vae.enc_mu.forward(h);
  r.sigma = nn::softplus(vae.enc_s.forward(h));
  if (sample) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    VecX eps(r.mu.size());
    for (long i = 0; i < eps.size(); ++i) eps[i] = gauss(rng);
    r.z = r.mu + r.sigma.cwiseProduct(eps);
  } else {
    r.z = r.mu;
  }
  return r;
}

VecX decode(const VaeParams& vae, const VecX& z) {
  return nn::sigmoid(vae.dec_out.forward(nn::relu(vae.dec_h.forward(z))));
}

double gaussian_kl(const VecX& mu_p, const VecX& var_p, const VecX& mu_q, const VecX& var_q) {
  if (mu_p.size() != mu_q.size() || var_p.size() != var_q.size() || mu_p.size() != var_p.size())
    throw ValidationError("gaussian_kl: dimension mismatch");
  if ((var_p.array() <= 0.0).any() || (var_q.array() <= 0.0).any())
    throw NumericError("gaussian_kl: non-positive variance");
  double kl = 0.0;
  for (long d = 0; d < mu_p.size(); ++d) {
    kl += 0.5 * (std::log(var_q[d] / var_p[d]) +
                 (var_p[d] + (mu_p[d] - mu_q[d]) * (mu_p[d] - mu_q[d])) / var_q[d] - 1.0);
  }
  return kl;
}

namespace {

constexpr double kVarFloor = 1e-8;

void batch_moments(const MatX& rows, VecX& mean, VecX& var) {
  const long n = rows.rows();
  if (n == 0) throw ValidationError("batch moments: empty batch");
  mean = rows.colwise().mean();
  var = ((rows.rowwise() - mean.transpose()).array().square().colwise().sum() / n)
            .transpose()
            .matrix();
  var = var.cwiseMax(kVarFloor);
}

}  // namespace

double kld(const MatX& p_rows, const MatX& q_rows) {
  if (p_rows.cols() != q_rows.cols()) throw ValidationError("kld: dimension mismatch");
  VecX mp, vp, mq, vq;
  batch_moments(p_rows, mp, vp);
  batch_moments(q_rows, mq, vq);
  return gaussian_kl(mp, vp, mq, vq);
}

double bce(const VecX& x, const VecX& p) {
  if (x.size() != p.size()) throw ValidationError("bce: dimension mismatch");
  double loss = 0.0;
  for (long d = 0; d < x.size(); ++d) {
    double pd = std::clamp(p[d], 1e-7, 1.0 - 1e-7);
    loss -= x[d] * std::log(pd) + (1.0 - x[d]) * std::log(1.0 - pd);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Training passes (full batch)
// ---------------------------------------------------------------------------

namespace {

struct VaeTrace {
  VecX x, h_pre, h, mu, s, sigma, eps, z, g_pre, g, u, p;
};

VaeTrace vae_forward(const VecX& x, const VaeParams& vae, const VecX& eps) {
  VaeTrace t;
  t.x = x;
  t.h_pre = vae.enc_h.forward(x);
  t.h = nn::relu(t.h_pre);
  t.mu = vae.enc_mu.forward(t.h);
  t.s = vae.enc_s.forward(t.h);
  t.sigma = nn::softplus(t.s);
  t.eps = eps;
  t.z = t.mu + t.sigma.cwiseProduct(eps);
  t.g_pre = vae.dec_h.forward(t.z);
  t.g = nn::relu(t.g_pre);
  t.u = vae.dec_out.forward(t.g);
  t.p = nn::sigmoid(t.u);
  return t;
}

// Backward from (dmu, dsigma, du) through the whole VAE.
void vae_backward(VaeParams& vae, const VaeTrace& t, const VecX& dmu_total,
                  const VecX& dsigma_total, const VecX& du) {
  VecX dg = vae.dec_out.backward(t.g, du);
  VecX dg_pre = nn::relu_backward(t.g_pre, dg);
  VecX dz = vae.dec_h.backward(t.z, dg_pre);

  VecX dmu = dmu_total + dz;
  VecX dsigma = dsigma_total + dz.cwiseProduct(t.eps);
  VecX ds = dsigma.cwiseProduct(nn::sigmoid(t.s));  // softplus'

  VecX dh = vae.enc_mu.backward(t.h, dmu);
  dh += vae.enc_s.backward(t.h, ds);
  VecX dh_pre = nn::relu_backward(t.h_pre, dh);
  vae.enc_h.backward(t.x, dh_pre);
}

void vae_zero(VaeParams& v) {
  v.enc_h.zero_grad();
  v.enc_mu.zero_grad();
  v.enc_s.zero_grad();
  v.dec_h.zero_grad();
  v.dec_out.zero_grad();
}

void vae_step(VaeParams& v, double lr, double momentum) {
  for (Dense* d : {&v.enc_h, &v.enc_mu, &v.enc_s, &v.dec_h, &v.dec_out})
    d->sgd_step(lr, momentum);
}

MatX draw_eps(long n, long d, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatX eps(n, d);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < d; ++j) eps(i, j) = gauss(rng);
  return eps;
}

}  // namespace

// Full-batch source objective: mean BCE + alpha * mean KL(N(mu,sigma^2)||N(0,I)).
double source_pass(const MatX& x_rows, VaeParams& vae, double alpha, const MatX& eps_rows,
                   bool with_grads) {
  const long n = x_rows.rows();
  if (n == 0) throw ValidationError("source_pass: empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (long i = 0; i < n; ++i) {
    VaeTrace t = vae_forward(x_rows.row(i).transpose(), vae, eps_rows.row(i).transpose());
    loss += bce(t.x, t.p);
    // latent prior term
    for (long d = 0; d < t.mu.size(); ++d)
      loss += alpha * 0.5 *
              (t.mu[d] * t.mu[d] + t.sigma[d] * t.sigma[d] - 1.0 - 2.0 * std::log(t.sigma[d]));
    if (with_grads) {
      VecX du = (t.p - t.x) * inv_n;
      VecX dmu = alpha * inv_n * t.mu;
      VecX dsigma = alpha * inv_n * (t.sigma - t.sigma.cwiseInverse());
      vae_backward(vae, t, dmu, dsigma, du);
    }
  }
  return loss * inv_n;
}

LatentMoments latent_moments(const MatX& x_rows, const VaeParams& vae) {
  const long n = x_rows.rows();
  if (n == 0) throw ValidationError("latent_moments: empty batch");
  MatX mus(n, vae.d_z), sig2(n, vae.d_z);
  std::mt19937_64 unused(0);
  for (long i = 0; i < n; ++i) {
    EncodeResult r = encode(x_rows.row(i).transpose(), vae, unused, false);
    mus.row(i) = r.mu.transpose();
    sig2.row(i) = r.sigma.array().square().matrix().transpose();
  }
  LatentMoments m;
  m.mean = mus.colwise().mean();
  m.var = ((mus.rowwise() - m.mean.transpose()).array().square().colwise().sum() /
           static_cast<double>(n))
              .transpose()
              .matrix();
  m.var += sig2.colwise().mean().transpose().matrix();
  m.var = m.var.cwiseMax(kVarFloor);
  return m;
}

double target_pass(const MatX& x_rows, VaeParams& vae, const AlignmentSpec& align,
                   const MatX& eps_rows, bool with_grads) {
  const long n = x_rows.rows();
  if (n == 0) throw ValidationError("target_pass: empty batch");

  // Forward everything first: the alignment term needs batch moments.
  std::vector<VaeTrace> traces;
  traces.reserve(static_cast<std::size_t>(n));
  double loss = 0.0;
  for (long i = 0; i < n; ++i) {
    traces.push_back(vae_forward(x_rows.row(i).transpose(), vae, eps_rows.row(i).transpose()));
    loss += bce(traces.back().x, traces.back().p);
  }
  loss /= static_cast<double>(n);

  const long dz = vae.d_z;
  struct Subset {
    std::vector<long> idx;
    const LatentMoments* ref;
    double weight;
  };
  std::vector<Subset> subsets;
  {
    Subset global;
    global.idx.resize(static_cast<std::size_t>(n));
    std::iota(global.idx.begin(), global.idx.end(), 0);
    global.ref = &align.reference;
    global.weight = align.beta;
    subsets.push_back(std::move(global));
  }
  for (std::size_t c = 0; c < align.class_reference.size(); ++c) {
    Subset sub;
    for (long i = 0; i < n; ++i)
      if (i < static_cast<long>(align.labels.size()) &&
          align.labels[static_cast<std::size_t>(i)] == static_cast<int>(c))
        sub.idx.push_back(i);
    if (sub.idx.empty()) continue;
    sub.ref = &align.class_reference[c];
    sub.weight = align.beta / static_cast<double>(align.class_reference.size());
    subsets.push_back(std::move(sub));
  }

  std::vector<VecX> dmu(static_cast<std::size_t>(n), VecX::Zero(dz));
  std::vector<VecX> dsigma(static_cast<std::size_t>(n), VecX::Zero(dz));

  for (const Subset& sub : subsets) {
    const double N = static_cast<double>(sub.idx.size());
    VecX m = VecX::Zero(dz), v = VecX::Zero(dz);
    for (long i : sub.idx) m += traces[static_cast<std::size_t>(i)].mu;
    m /= N;
    for (long i : sub.idx) {
      const VaeTrace& t = traces[static_cast<std::size_t>(i)];
      v += (t.mu - m).array().square().matrix() + t.sigma.array().square().matrix();
    }
    v /= N;
    v = v.cwiseMax(kVarFloor);

    loss += sub.weight * gaussian_kl(m, v, sub.ref->mean, sub.ref->var);
    if (!with_grads) continue;

    VecX dKL_dm = (m - sub.ref->mean).cwiseQuotient(sub.ref->var);
    VecX dKL_dv = 0.5 * (sub.ref->var.cwiseInverse() - v.cwiseInverse());
    for (long i : sub.idx) {
      const VaeTrace& t = traces[static_cast<std::size_t>(i)];
      dmu[static_cast<std::size_t>(i)] +=
          sub.weight * (dKL_dm / N + dKL_dv.cwiseProduct(2.0 * (t.mu - m) / N));
      dsigma[static_cast<std::size_t>(i)] +=
          sub.weight * dKL_dv.cwiseProduct(2.0 * t.sigma / N);
    }
  }

  if (with_grads) {
    for (long i = 0; i < n; ++i) {
      const VaeTrace& t = traces[static_cast<std::size_t>(i)];
      // BCE grads carry the 1/N batch mean; the caller must NOT rescale.
      VecX du = (t.p - t.x) / static_cast<double>(n);
      vae_backward(vae, t, dmu[static_cast<std::size_t>(i)], dsigma[static_cast<std::size_t>(i)],
                   du);
    }
  }
  return loss;
}

double source_loss(const MatX& x_rows, const VaeParams& vae, double alpha, std::mt19937_64& rng) {
  MatX eps = draw_eps(x_rows.rows(), vae.d_z, rng);
  VaeParams copy = vae;
  return source_pass(x_rows, copy, alpha, eps, false);
}

double target_loss(const MatX& x_rows, const VaeParams& vae_t, const LatentMoments& source_ref,
                   double beta, std::mt19937_64& rng) {
  MatX eps = draw_eps(x_rows.rows(), vae_t.d_z, rng);
  AlignmentSpec align;
  align.reference = source_ref;
  align.beta = beta;
  align.labels.assign(static_cast<std::size_t>(x_rows.rows()), -1);
  VaeParams copy = vae_t;
  return target_pass(x_rows, copy, align, eps, false);
}

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

Classifier Classifier::init(int d_in, int hidden_width, int classes, std::mt19937_64& rng) {
  Classifier c;
  c.d_in = d_in;
  c.hidden = Dense::make(hidden_width, d_in, rng);
  c.out = Dense::make(classes, hidden_width, rng);
  return c;
}

VecX Classifier::probs(const VecX& x) const {
  return nn::softmax(out.forward(nn::relu(hidden.forward(x))));
}

void Classifier::collect(std::vector<double*>& params, std::vector<double*>& grads) {
  hidden.collect(params, grads);
  out.collect(params, grads);
}

double classifier_pass(const MatX& x_rows, const Eigen::VectorXi& y, Classifier& clf,
                       bool with_grads) {
  const long n = x_rows.rows();
  double loss = 0.0;
  for (long i = 0; i < n; ++i) {
    VecX x = x_rows.row(i).transpose();
    VecX h_pre = clf.hidden.forward(x);
    VecX h = nn::relu(h_pre);
    VecX logits = clf.out.forward(h);
    VecX probs = nn::softmax(logits);
    loss += nn::cross_entropy(probs, y[i]);
    if (with_grads) {
      VecX dlogits = probs;
      dlogits[y[i]] -= 1.0;
      VecX dh = clf.out.backward(h, dlogits);
      dh = nn::relu_backward(h_pre, dh);
      clf.hidden.backward(x, dh);
    }
  }
  return loss / static_cast<double>(n);
}

Classifier train_classifier(const MatX& x_rows, const Eigen::VectorXi& y, int classes,
                            int hidden_width, double lr, double momentum, int epochs,
                            std::mt19937_64& rng, std::vector<double>* history) {
  Classifier clf = Classifier::init(static_cast<int>(x_rows.cols()), hidden_width, classes, rng);
  const double scale = 1.0 / std::max<long>(1, x_rows.rows());
  for (int e = 0; e < epochs; ++e) {
    clf.hidden.zero_grad();
    clf.out.zero_grad();
    double loss = classifier_pass(x_rows, y, clf, true);
    clf.hidden.gW *= scale;
    clf.hidden.gb *= scale;
    clf.out.gW *= scale;
    clf.out.gb *= scale;
    clf.hidden.sgd_step(lr, momentum);
    clf.out.sgd_step(lr, momentum);
    if (!std::isfinite(loss)) throw NumericError("classifier: non-finite loss");
    if (history) history->push_back(loss);
  }
  return clf;
}

// ---------------------------------------------------------------------------
// Two-stage training
// ---------------------------------------------------------------------------

AdaptationModel train_adaptation(const DomainData& data, const AdaptConfig& config,
                                 AdaptDiagnostics* diagnostics) {
  AdaptDiagnostics local;
  AdaptDiagnostics& diag = diagnostics ? *diagnostics : local;
  diag.warnings = data.validate();

  const int d_s = static_cast<int>(data.x_source.cols());
  MatX x_target(data.x_target_labeled.rows() + data.x_target_unlabeled.rows(),
                std::max(data.x_target_labeled.cols(), data.x_target_unlabeled.cols()));
  if (data.x_target_labeled.rows() > 0 && data.x_target_unlabeled.rows() > 0 &&
      data.x_target_labeled.cols() != data.x_target_unlabeled.cols())
    throw ValidationError("train_adaptation: target dimension mismatch");
  if (data.x_target_labeled.rows() > 0)
    x_target.topRows(data.x_target_labeled.rows()) = data.x_target_labeled;
  if (data.x_target_unlabeled.rows() > 0)
    x_target.bottomRows(data.x_target_unlabeled.rows()) = data.x_target_unlabeled;
  if (x_target.rows() == 0) throw ValidationError("train_adaptation: empty target set");
  const int d_t = static_cast<int>(x_target.cols());

  std::vector<int> target_labels(static_cast<std::size_t>(x_target.rows()), -1);
  for (long i = 0; i < data.x_target_labeled.rows(); ++i)
    target_labels[static_cast<std::size_t>(i)] = data.y_target_labeled[i];

  AdaptationModel model;
  {
    auto rng = make_rng(config.seed, 200);
    model.source = VaeParams::init(d_s, config.enc_hidden, config.d_z, rng);
  }
  {
    auto rng = make_rng(config.seed, 201);
    model.target = VaeParams::init(d_t, config.enc_hidden, config.d_z, rng);
  }

  // Stage 1a: source VAE.
  {
    auto eps_rng = make_rng(config.seed, 210);
    for (int e = 0; e < config.vae_epochs; ++e) {
      MatX eps = draw_eps(data.x_source.rows(), config.d_z, eps_rng);
      vae_zero(model.source);
      double loss = source_pass(data.x_source, model.source, config.alpha, eps, true);
      vae_step(model.source, config.lr, config.momentum);
      if (!std::isfinite(loss))
        throw NumericError("train_adaptation: non-finite loss in source stage, epoch " +
                           std::to_string(e));
      diag.source_loss_history.push_back(loss);
    }
  }
  model.source_frozen = true;

  // Frozen source latent references.
  AlignmentSpec align;
  align.reference = latent_moments(data.x_source, model.source);
  align.beta = config.beta;
  align.labels = target_labels;
  if (config.class_conditional_alignment && data.x_target_labeled.rows() > 0) {
    align.class_reference.resize(static_cast<std::size_t>(data.n_classes));
    for (int c = 0; c < data.n_classes; ++c) {
      std::vector<long> rows;
      for (long i = 0; i < data.y_source.size(); ++i)
        if (data.y_source[i] == c) rows.push_back(i);
      if (rows.empty()) throw ValidationError("train_adaptation: source class without samples");
      MatX sub(static_cast<long>(rows.size()), d_s);
      for (std::size_t k = 0; k < rows.size(); ++k) sub.row(static_cast<long>(k)) = data.x_source.row(rows[k]);
      align.class_reference[static_cast<std::size_t>(c)] = latent_moments(sub, model.source);
    }
  }

  {
    LatentMoments before = latent_moments(x_target, model.target);
    diag.kld_before = gaussian_kl(before.mean, before.var, align.reference.mean, align.reference.var);
  }

  // Stage 1b: target VAE against the frozen source latents.
  {
    auto eps_rng = make_rng(config.seed, 211);
    for (int e = 0; e < config.vae_epochs; ++e) {
      MatX eps = draw_eps(x_target.rows(), config.d_z, eps_rng);
      vae_zero(model.target);
      double loss = target_pass(x_target, model.target, align, eps, true);
      vae_step(model.target, config.lr, config.momentum);
      if (!std::isfinite(loss))
        throw NumericError("train_adaptation: non-finite loss in target stage, epoch " +
                           std::to_string(e));
      diag.target_loss_history.push_back(loss);
    }
  }

  LatentMoments after = latent_moments(x_target, model.target);
  diag.kld_after = gaussian_kl(after.mean, after.var, align.reference.mean, align.reference.var);

  // Stage 2: classifier on the frozen source latents (mu, no sampling).
  {
    MatX z_source(data.x_source.rows(), config.d_z);
    std::mt19937_64 unused(0);
    for (long i = 0; i < data.x_source.rows(); ++i)
      z_source.row(i) =
          encode(data.x_source.row(i).transpose(), model.source, unused, false).mu.transpose();
    auto rng = make_rng(config.seed, 202);
    try {
      model.classifier =
          train_classifier(z_source, data.y_source, data.n_classes, config.clf_hidden, config.lr,
                           config.momentum, config.clf_epochs, rng, &diag.classifier_loss_history);
    } catch (const NumericError& e) {
      throw NumericError(std::string("train_adaptation: classifier stage: ") + e.what());
    }
  }

  model.trained = true;
  return model;
}

int adapt_predict(const VecX& x, const AdaptationModel& model) {
  if (!model.trained) throw ValidationError("adapt_predict: model is untrained");
  std::mt19937_64 unused(0);
  EncodeResult r = encode(x, model.target, unused, false);
  VecX probs = model.classifier.probs(r.mu);
  int best = 0;
  for (int k = 1; k < probs.size(); ++k)
    if (probs[k] > probs[best]) best = k;  // ties keep the lowest index
  return best;
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

VecX BenchmarkSpec::effective_scale() const {
  if (scale.size() == dim) return scale;
  VecX s = VecX::Ones(dim);
  if (dim >= 2) {
    s[0] = 0.35;
    s[1] = 2.2;
  }
  return s;
}

namespace {

MatX sigmoid_rows(const MatX& m) { return (1.0 / (1.0 + (-m.array()).exp())).matrix(); }

struct DomainDraw {
  MatX x;  // squashed features
  Eigen::VectorXi y;
};

// Balanced two-class Gaussian draw; `transform` maps raw features (identity
// for the source domain, scale*rotation for the target).
DomainDraw draw_domain(int n, const BenchmarkSpec& spec, const MatX& transform,
                       std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  DomainDraw out;
  out.x.resize(n, spec.dim);
  out.y.resize(n);
  for (int i = 0; i < n; ++i) {
    int label = i % 2;
    VecX raw(spec.dim);
    for (int d = 0; d < spec.dim; ++d) raw[d] = gauss(rng) * spec.noise;
    raw[0] += (label == 0 ? -spec.margin : spec.margin);
    VecX mapped = transform * raw;
    out.x.row(i) = mapped.transpose();
    out.y[i] = label;
  }
  out.x = sigmoid_rows(out.x);
  return out;
}

MatX rotation_scale(const BenchmarkSpec& spec) {
  MatX r = MatX::Identity(spec.dim, spec.dim);
  const double a = spec.angle_deg * M_PI / 180.0;
  if (spec.dim >= 2) {
    r(0, 0) = std::cos(a);
    r(0, 1) = -std::sin(a);
    r(1, 0) = std::sin(a);
    r(1, 1) = std::cos(a);
  }
  return spec.effective_scale().asDiagonal() * r;
}

}  // namespace

BenchmarkRun run_domain_benchmark(const BenchmarkSpec& spec, std::uint64_t seed) {
  auto rng_src = make_rng(seed, 300);
  auto rng_tgt = make_rng(seed, 301);
  auto rng_test = make_rng(seed, 302);
  auto rng_clf = make_rng(seed, 303);

  MatX identity = MatX::Identity(spec.dim, spec.dim);
  MatX transform = rotation_scale(spec);

  DomainDraw source = draw_domain(spec.n_source, spec, identity, rng_src);
  DomainDraw target = draw_domain(spec.n_target_labeled + spec.n_target_unlabeled, spec,
                                  transform, rng_tgt);
  DomainDraw test = draw_domain(spec.n_target_test, spec, transform, rng_test);

  DomainData data;
  data.x_source = source.x;
  data.y_source = source.y;
  data.x_target_labeled = target.x.topRows(spec.n_target_labeled);
  data.y_target_labeled = target.y.head(spec.n_target_labeled);
  data.x_target_unlabeled = target.x.bottomRows(spec.n_target_unlabeled);
  data.n_classes = 2;

  AdaptConfig cfg = spec.adapt;
  cfg.seed = derive_seed(seed, 310);

  AdaptDiagnostics diag;
  AdaptationModel model = train_adaptation(data, cfg, &diag);

  BenchmarkRun run;
  run.seed = seed;
  run.kld_before = diag.kld_before;
  run.kld_after = diag.kld_after;

  int correct = 0;
  for (long i = 0; i < test.x.rows(); ++i)
    if (adapt_predict(test.x.row(i).transpose(), model) == test.y[i]) ++correct;
  run.adapted_accuracy = static_cast<double>(correct) / test.x.rows();

  // Source-only baseline: same classifier architecture on raw source
  // features, evaluated directly on the target features.
  Classifier baseline = train_classifier(source.x, source.y, 2, cfg.clf_hidden, cfg.lr,
                                         cfg.momentum, cfg.clf_epochs, rng_clf, nullptr);
  correct = 0;
  for (long i = 0; i < test.x.rows(); ++i) {
    VecX probs = baseline.probs(test.x.row(i).transpose());
    int best = 0;
    for (int k = 1; k < probs.size(); ++k)
      if (probs[k] > probs[best]) best = k;
    if (best == test.y[i]) ++correct;
  }
  run.source_only_accuracy = static_cast<double>(correct) / test.x.rows();
  return run;
}

// ---------------------------------------------------------------------------
// Spec file and results
// ---------------------------------------------------------------------------

using nlohmann::json;

std::string benchmark_spec_to_json(const BenchmarkSpec& spec) {
  json scale = json::array();
  VecX s = spec.effective_scale();
  for (long i = 0; i < s.size(); ++i) scale.push_back(s[i]);
  json seeds = json::array();
  for (auto v : spec.seeds) seeds.push_back(v);
  json j{{"dim", spec.dim},
         {"angle_deg", spec.angle_deg},
         {"scale", scale},
         {"margin", spec.margin},
         {"noise", spec.noise},
         {"n_source", spec.n_source},
         {"n_target_labeled", spec.n_target_labeled},
         {"n_target_unlabeled", spec.n_target_unlabeled},
         {"n_target_test", spec.n_target_test},
         {"seeds", seeds},
         {"adapt",
          {{"d_z", spec.adapt.d_z},
           {"enc_hidden", spec.adapt.enc_hidden},
           {"clf_hidden", spec.adapt.clf_hidden},
           {"alpha", spec.adapt.alpha},
           {"beta", spec.adapt.beta},
           {"lr", spec.adapt.lr},
           {"momentum", spec.adapt.momentum},
           {"vae_epochs", spec.adapt.vae_epochs},
           {"clf_epochs", spec.adapt.clf_epochs},
           {"class_conditional_alignment", spec.adapt.class_conditional_alignment}}}};
  return j.dump(2);
}

BenchmarkSpec benchmark_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("benchmark spec: ") + e.what());
  }
  BenchmarkSpec spec;
  try {
    spec.dim = j.value("dim", spec.dim);
    spec.angle_deg = j.value("angle_deg", spec.angle_deg);
    if (j.contains("scale")) {
      spec.scale.resize(static_cast<long>(j["scale"].size()));
      for (long i = 0; i < spec.scale.size(); ++i)
        spec.scale[i] = j["scale"].at(static_cast<std::size_t>(i)).get<double>();
    }
    spec.margin = j.value("margin", spec.margin);
    spec.noise = j.value("noise", spec.noise);
    spec.n_source = j.value("n_source", spec.n_source);
    spec.n_target_labeled = j.value("n_target_labeled", spec.n_target_labeled);
    spec.n_target_unlabeled = j.value("n_target_unlabeled", spec.n_target_unlabeled);
    spec.n_target_test = j.value("n_target_test", spec.n_target_test);
    if (j.contains("seeds")) {
      spec.seeds.clear();
      for (const auto& s : j["seeds"]) spec.seeds.push_back(s.get<std::uint64_t>());
    }
    if (j.contains("adapt")) {
      const auto& a = j["adapt"];
      spec.adapt.d_z = a.value("d_z", spec.adapt.d_z);
      spec.adapt.enc_hidden = a.value("enc_hidden", spec.adapt.enc_hidden);
      spec.adapt.clf_hidden = a.value("clf_hidden", spec.adapt.clf_hidden);
      spec.adapt.alpha = a.value("alpha", spec.adapt.alpha);
      spec.adapt.beta = a.value("beta", spec.adapt.beta);
      spec.adapt.lr = a.value("lr", spec.adapt.lr);
      spec.adapt.momentum = a.value("momentum", spec.adapt.momentum);
      spec.adapt.vae_epochs = a.value("vae_epochs", spec.adapt.vae_epochs);
      spec.adapt.clf_epochs = a.value("clf_epochs", spec.adapt.clf_epochs);
      spec.adapt.class_conditional_alignment =
          a.value("class_conditional_alignment", spec.adapt.class_conditional_alignment);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("benchmark spec: ") + e.what());
  }
  return spec;
}

void write_benchmark_csv(const std::vector<BenchmarkRun>& runs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("write_benchmark_csv: cannot open " + path);
  out << "seed,method,source_only_accuracy,adapted_accuracy,kld_before,kld_after\n";
  char buf[256];
  for (const BenchmarkRun& r : runs) {
    std::snprintf(buf, sizeof(buf), "%llu,vae_kld,%.6f,%.6f,%.9g,%.9g\n",
                  static_cast<unsigned long long>(r.seed), r.source_only_accuracy,
                  r.adapted_accuracy, r.kld_before, r.kld_after);
    out << buf;
  }
}

}  // namespace palmar
