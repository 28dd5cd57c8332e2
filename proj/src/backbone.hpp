#pragma once

#include <span>
#include <utility>
#include <vector>

#include "autodiff.hpp"
#include "corpus.hpp"
#include "relation_graph.hpp"
#include "util.hpp"

namespace relpara::model {

// Stack of conv3x3 -> ReLU -> 2x2 average-pool blocks.
struct BackboneConfig {
  int input_height = 224;
  int input_width = 224;
  int input_channels = 3;
  std::vector<int> channels = {32, 64, 128, 256};
  bool conv_bias = true;

  int grid_height() const { return input_height >> channels.size(); }
  int grid_width() const { return input_width >> channels.size(); }
  int grid_channels() const { return channels.empty() ? input_channels : channels.back(); }
  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

// Image features fed to attention: channels x (height * width), cells in
// row-major order.
struct FeatureGrid {
  Eigen::MatrixXd values;
  int height = 0;
  int width = 0;
  int channels() const { return static_cast<int>(values.rows()); }
  int cells() const { return static_cast<int>(values.cols()); }
};

struct AbnormalityPrediction {
  Eigen::VectorXd logits;
  Eigen::VectorXd probabilities;
};

inline constexpr double kProbabilityClamp = 1e-7;

class Backbone {
 public:
  Backbone() = default;
  Backbone(BackboneConfig config, int abnormalities);

  const BackboneConfig& config() const { return config_; }
  int abnormalities() const { return abnormalities_; }

  void initialize(Rng& rng);
  void collect(std::vector<const ad::Parameter*>& out) const;

  ad::Var encode(ad::Graph& g, ad::Var image) const;
  // Spatial mean pool followed by one affine map to M logits.
  ad::Var classify_logits(ad::Graph& g, ad::Var grid) const;

  FeatureGrid encode_image(const corpus::Image& image) const;
  AbnormalityPrediction classify(const FeatureGrid& grid) const;

  std::vector<ad::Parameter> conv_weight;
  std::vector<ad::Parameter> conv_bias;
  ad::Parameter classifier_weight;
  ad::Parameter classifier_bias;

 private:
  BackboneConfig config_;
  int abnormalities_ = 0;
};

// channels x (height * width) view of an image, checked against the config.
Eigen::MatrixXd image_matrix(const corpus::Image& image, const BackboneConfig& config);

// Mean binary cross entropy (probabilities clamped to [1e-7, 1 - 1e-7]) plus
// the relationship constraint.
double classification_loss(const AbnormalityPrediction& prediction, std::span<const int> labels,
                           const relation::RelationMatrix& relation);

// Graph form over logits; returns {bce, constraint}.
std::pair<ad::Var, ad::Var> classification_loss(ad::Graph& g, ad::Var logits, std::span<const int> labels,
                                                const relation::RelationMatrix& relation);

struct ScoredLabels {
  std::vector<double> scores;
  std::vector<int> labels;
};

ScoredLabels auc_input(const AbnormalityPrediction& prediction, std::span<const int> labels);
void append_auc_input(ScoredLabels& batch, const AbnormalityPrediction& prediction, std::span<const int> labels);

}  // namespace relpara::model
