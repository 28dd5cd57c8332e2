#include "backbone.hpp"

#include <algorithm>
#include <cmath>

namespace relpara::model {

void BackboneConfig::validate() const {
  require(input_height > 0 && input_width > 0 && input_channels > 0, ErrorKind::InvalidArgument,
          "backbone: input dimensions must be positive");
  const int factor = 1 << channels.size();
  require(input_height % factor == 0 && input_width % factor == 0, ErrorKind::InvalidArgument,
          "backbone: input " + std::to_string(input_height) + "x" + std::to_string(input_width) +
              " is not divisible by 2^" + std::to_string(channels.size()));
  for (int c : channels) require(c >= 1, ErrorKind::InvalidArgument, "backbone: channel widths must be >= 1");
}

Backbone::Backbone(BackboneConfig config, int abnormalities)
    : config_(std::move(config)), abnormalities_(abnormalities) {
  config_.validate();
  require(abnormalities >= 1, ErrorKind::InvalidArgument, "backbone: need at least one abnormality");
  int in = config_.input_channels;
  for (std::size_t b = 0; b < config_.channels.size(); ++b) {
    const int out = config_.channels[b];
    const std::string prefix = "backbone.conv" + std::to_string(b);
    conv_weight.emplace_back(prefix + ".weight", out, in * 9);
    if (config_.conv_bias) conv_bias.emplace_back(prefix + ".bias", out, 1);
    in = out;
  }
  classifier_weight = ad::Parameter("backbone.classifier.weight", abnormalities, config_.grid_channels());
  classifier_bias = ad::Parameter("backbone.classifier.bias", abnormalities, 1);
}

void Backbone::initialize(Rng& rng) {
  auto fill = [&rng](ad::Parameter& p, double bound) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.uniform(-bound, bound);
  };
  // Conv layers feed ReLUs, so they get the sqrt(6 / fan_in) gain; plain
  // 1 / sqrt(fan_in) shrinks activations block after block.
  for (auto& w : conv_weight) fill(w, std::sqrt(6.0 / static_cast<double>(w.value.cols())));
  for (auto& b : conv_bias) b.value.setZero();
  fill(classifier_weight, 1.0 / std::sqrt(static_cast<double>(classifier_weight.value.cols())));
  classifier_bias.value.setZero();
}

void Backbone::collect(std::vector<const ad::Parameter*>& out) const {
  for (std::size_t b = 0; b < conv_weight.size(); ++b) {
    out.push_back(&conv_weight[b]);
    if (config_.conv_bias) out.push_back(&conv_bias[b]);
  }
  out.push_back(&classifier_weight);
  out.push_back(&classifier_bias);
}

ad::Var Backbone::encode(ad::Graph& g, ad::Var image) const {
  int h = config_.input_height;
  int w = config_.input_width;
  require(g.value(image).rows() == config_.input_channels && g.value(image).cols() == static_cast<Eigen::Index>(h) * w,
          ErrorKind::Dimension, "encode_image: image tensor does not match the backbone input shape");
  ad::Var x = image;
  for (std::size_t b = 0; b < conv_weight.size(); ++b) {
    ad::Var bias = config_.conv_bias ? g.param(conv_bias[b]) : ad::Var{};
    x = g.conv3x3(x, g.param(conv_weight[b]), bias, h, w);
    x = g.relu(x);
    x = g.avg_pool2(x, h, w);
    h /= 2;
    w /= 2;
  }
  return x;
}

ad::Var Backbone::classify_logits(ad::Graph& g, ad::Var grid) const {
  ad::Var pooled = g.mean_cols(grid);
  return g.add(g.matmul(g.param(classifier_weight), pooled), g.param(classifier_bias));
}

Eigen::MatrixXd image_matrix(const corpus::Image& image, const BackboneConfig& config) {
  require(image.height == config.input_height && image.width == config.input_width &&
              image.channels == config.input_channels,
          ErrorKind::Dimension,
          "image is " + std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
              std::to_string(image.channels) + ", backbone expects " + std::to_string(config.input_height) + "x" +
              std::to_string(config.input_width) + "x" + std::to_string(config.input_channels));
  Eigen::MatrixXd m(image.channels, static_cast<Eigen::Index>(image.height) * image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) m(c, y * image.width + x) = image.at(y, x, c);
    }
  }
  return m;
}

FeatureGrid Backbone::encode_image(const corpus::Image& image) const {
  ad::Graph g;
  ad::Var out = encode(g, g.constant(image_matrix(image, config_)));
  FeatureGrid grid;
  grid.values = g.value(out);
  grid.height = config_.grid_height();
  grid.width = config_.grid_width();
  return grid;
}

AbnormalityPrediction Backbone::classify(const FeatureGrid& grid) const {
  ad::Graph g;
  ad::Var logits = classify_logits(g, g.constant(grid.values));
  AbnormalityPrediction p;
  p.logits = g.value(logits).col(0);
  p.probabilities = p.logits.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  return p;
}

double classification_loss(const AbnormalityPrediction& prediction, std::span<const int> labels,
                           const relation::RelationMatrix& relation) {
  const auto m = prediction.probabilities.size();
  require(static_cast<Eigen::Index>(labels.size()) == m, ErrorKind::Dimension,
          "classification_loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(m) + " predictions");
  double bce = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y == 0 || y == 1, ErrorKind::InvalidArgument, "classification_loss: labels must be 0 or 1");
    const double p = std::clamp(prediction.probabilities[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    bce -= y ? std::log(p) : std::log(1.0 - p);
  }
  bce /= static_cast<double>(m);
  std::vector<double> a(prediction.probabilities.data(), prediction.probabilities.data() + m);
  return bce + relation::constraint_loss(a, relation);
}

std::pair<ad::Var, ad::Var> classification_loss(ad::Graph& g, ad::Var logits, std::span<const int> labels,
                                                const relation::RelationMatrix& relation) {
  const auto m = g.value(logits).rows();
  require(static_cast<Eigen::Index>(labels.size()) == m && static_cast<Eigen::Index>(relation.size()) == m,
          ErrorKind::Dimension, "classification_loss: labels, logits and relation matrix disagree on M");
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const int v = labels[static_cast<std::size_t>(i)];
    require(v == 0 || v == 1, ErrorKind::InvalidArgument, "classification_loss: labels must be 0 or 1");
    y[i] = v;
  }
  ad::Var probs = g.sigmoid(logits);
  ad::Var bce = g.bce_mean(probs, y, kProbabilityClamp);

  const Eigen::MatrixXd& a = g.value(probs);
  std::vector<double> av(a.data(), a.data() + m);
  Eigen::MatrixXd value(1, 1);
  value(0, 0) = relation::constraint_loss(av, relation);
  ad::Var constraint = g.custom(std::move(value), {probs}, [probs, &relation](ad::Graph& gr, const Eigen::MatrixXd& grad) {
    const Eigen::MatrixXd& p = gr.value(probs);
    std::vector<double> pv(p.data(), p.data() + p.size());
    const auto d = relation::constraint_loss_gradient(pv, relation);
    Eigen::MatrixXd out(p.rows(), 1);
    for (Eigen::Index i = 0; i < p.rows(); ++i) out(i, 0) = d[static_cast<std::size_t>(i)] * grad(0, 0);
    gr.accumulate(probs, out);
  });
  return {bce, constraint};
}

ScoredLabels auc_input(const AbnormalityPrediction& prediction, std::span<const int> labels) {
  ScoredLabels out;
  append_auc_input(out, prediction, labels);
  return out;
}

void append_auc_input(ScoredLabels& batch, const AbnormalityPrediction& prediction, std::span<const int> labels) {
  const auto m = prediction.probabilities.size();
  require(m > 0, ErrorKind::InvalidArgument, "auc_input: empty prediction");
  require(static_cast<Eigen::Index>(labels.size()) == m, ErrorKind::Dimension,
          "auc_input: " + std::to_string(labels.size()) + " labels for " + std::to_string(m) + " scores");
  for (Eigen::Index i = 0; i < m; ++i) {
    batch.scores.push_back(prediction.probabilities[i]);
    batch.labels.push_back(labels[static_cast<std::size_t>(i)]);
  }
}

}  // namespace relpara::model
