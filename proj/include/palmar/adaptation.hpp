#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "palmar/nn.hpp"
#include "palmar/types.hpp"

namespace palmar {

/// Source/target sample sets; rows are samples. Heterogeneous feature
/// dimensions are allowed (the shared space is the latent one).
struct DomainData {
  MatX x_source;            // n_s x d_s
  Eigen::VectorXi y_source;
  MatX x_target_labeled;    // n_l x d_t
  Eigen::VectorXi y_target_labeled;
  MatX x_target_unlabeled;  // n_u x d_t
  int n_classes = 2;

  /// Returns human-readable warnings (e.g. label-budget ratios below 5).
  std::vector<std::string> validate() const;
};

/// Gaussian-latent autoencoder: x -> relu dense -> (mu, softplus sigma);
/// z -> relu dense -> sigmoid reconstruction.
struct VaeParams {
  int d_in = 0;
  int d_z = 0;
  nn::Dense enc_h, enc_mu, enc_s;
  nn::Dense dec_h, dec_out;

  static VaeParams init(int d_in, int hidden, int d_z, std::mt19937_64& rng);
  void collect(std::vector<double*>& params, std::vector<double*>& grads);
};

struct EncodeResult {
  VecX mu, sigma, z;
};

/// Reparameterized encoding: z = mu + sigma .* eps with eps ~ N(0, I) when
/// sample is true, z = mu otherwise.
EncodeResult encode(const VecX& x, const VaeParams& vae, std::mt19937_64& rng, bool sample = true);
VecX decode(const VaeParams& vae, const VecX& z);

/// Closed-form KL(N(mu_p, var_p) || N(mu_q, var_q)), diagonal, summed over
/// dimensions. Throws NumericError on non-positive variances.
double gaussian_kl(const VecX& mu_p, const VecX& var_p, const VecX& mu_q, const VecX& var_q);

/// KL divergence between two sample batches (rows = draws) via per-dimension
/// moment matching. Asymmetric; zero iff the moments coincide.
double kld(const MatX& p_rows, const MatX& q_rows);

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1-1e-7].
double bce(const VecX& x, const VecX& p);

/// Mean over the batch of reconstruction BCE + alpha * KL(N(mu,sigma^2) || N(0,I)).
double source_loss(const MatX& x_rows, const VaeParams& vae, double alpha, std::mt19937_64& rng);

/// Mean reconstruction BCE + beta * KL between the batch latent distribution
/// (analytic moments from mu/sigma) and the reference latent moments.
struct LatentMoments {
  VecX mean, var;
};
LatentMoments latent_moments(const MatX& x_rows, const VaeParams& vae);
double target_loss(const MatX& x_rows, const VaeParams& vae_t, const LatentMoments& source_ref,
                   double beta, std::mt19937_64& rng);

struct Classifier {
  int d_in = 0;
  nn::Dense hidden, out;
  static Classifier init(int d_in, int hidden_width, int classes, std::mt19937_64& rng);
  VecX probs(const VecX& x) const;
  void collect(std::vector<double*>& params, std::vector<double*>& grads);
};

// -- training passes (exposed for gradient verification) ---------------------
// Full-batch objective evaluations; with_grads accumulates layer gradients
// already scaled for the batch mean, so a caller steps directly afterwards.
// eps_rows supplies the reparameterization draws (one row per sample).

double source_pass(const MatX& x_rows, VaeParams& vae, double alpha, const MatX& eps_rows,
                   bool with_grads);

struct AlignmentSpec {
  LatentMoments reference;                      // frozen source global moments
  std::vector<LatentMoments> class_reference;   // optional per-class anchors
  std::vector<int> labels;                      // per row; -1 = unlabeled
  double beta = 1.0;
};

double target_pass(const MatX& x_rows, VaeParams& vae, const AlignmentSpec& align,
                   const MatX& eps_rows, bool with_grads);

double classifier_pass(const MatX& x_rows, const Eigen::VectorXi& y, Classifier& clf,
                       bool with_grads);

Classifier train_classifier(const MatX& x_rows, const Eigen::VectorXi& y, int classes,
                            int hidden_width, double lr, double momentum, int epochs,
                            std::mt19937_64& rng, std::vector<double>* history);

struct AdaptationModel {
  VaeParams source, target;
  Classifier classifier;
  bool source_frozen = false;
  bool trained = false;
};

struct AdaptConfig {
  int d_z = 4;
  int enc_hidden = 64;
  int clf_hidden = 32;
  double alpha = 1.0;  // latent prior weight (source stage)
  double beta = 1.0;   // domain KLD weight (target stage)
  double lr = 0.05;
  double momentum = 0.9;
  int vae_epochs = 300;
  int clf_epochs = 300;
  std::uint64_t seed = 1;
  bool class_conditional_alignment = true;  // use labeled target anchors
};

struct AdaptDiagnostics {
  std::vector<double> source_loss_history;
  std::vector<double> target_loss_history;
  std::vector<double> classifier_loss_history;
  double kld_before = 0.0;  // target-vs-source latent KLD pre target stage
  double kld_after = 0.0;
  std::vector<std::string> warnings;
};

/// Two-stage training: source VAE to convergence, freeze the source encoder,
/// target VAE with the domain KLD term, then the shared classifier on the
/// frozen source latents. Throws NumericError on non-finite losses, tagged
/// with the stage.
AdaptationModel train_adaptation(const DomainData& data, const AdaptConfig& config,
                                 AdaptDiagnostics* diagnostics = nullptr);

/// argmax of classifier(E_t(x)) using mu only (no sampling at inference).
int adapt_predict(const VecX& x, const AdaptationModel& model);

// ---------------------------------------------------------------------------
// Synthetic two-domain benchmark (rotated/rescaled Gaussian classes)
// ---------------------------------------------------------------------------

struct BenchmarkSpec {
  int dim = 8;
  double angle_deg = 30.0;            // rotation in the (e1, e2) plane
  VecX scale;                         // per-axis rescale; empty = preset
  double margin = 2.0;                // class mean at +-margin * e1
  double noise = 1.0;
  int n_source = 400;
  int n_target_labeled = 24;
  int n_target_unlabeled = 400;
  int n_target_test = 400;
  AdaptConfig adapt;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  VecX effective_scale() const;
};

struct BenchmarkRun {
  std::uint64_t seed = 0;
  double source_only_accuracy = 0.0;
  double adapted_accuracy = 0.0;
  double kld_before = 0.0;
  double kld_after = 0.0;
};

BenchmarkRun run_domain_benchmark(const BenchmarkSpec& spec, std::uint64_t seed);

std::string benchmark_spec_to_json(const BenchmarkSpec& spec);
BenchmarkSpec benchmark_spec_from_json(const std::string& text);
void write_benchmark_csv(const std::vector<BenchmarkRun>& runs, const std::string& path);

}  // namespace palmar
