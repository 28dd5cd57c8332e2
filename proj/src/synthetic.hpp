#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corpus.hpp"

namespace relpara::synthetic {

// Abnormalities listed together fire together: the group is activated with a
// probability proportional to its weight and each member then fires with
// probability cofire. Abnormalities outside every cluster form singleton groups
// of weight 1 that always fire when activated.
struct Cluster {
  std::vector<int> members;
  double weight = 1.0;
};

struct SyntheticConfig {
  int abnormalities = 8;
  int templates = 12;
  int vocab_size = 60;  // target distinct tokens; reached by enabling sentence variants
  int train_samples = 500;
  int val_samples = 100;
  int test_samples = 100;
  std::vector<Cluster> clusters;           // empty -> pairs {0,1} and {2,3}
  std::vector<std::vector<int>> triggers;  // abnormality -> 0-based template ids; empty -> round robin
  double retrieval_ratio = 0.25;
  double cofire = 0.9;
  double background = 0.02;
  int normal_sentences = 4;
  int image_size = 32;
  std::uint64_t seed = 7;
};

// Resolved generator parameters: defaults filled in and activation
// probabilities scaled so the expected template share matches retrieval_ratio.
struct SyntheticPlan {
  SyntheticConfig config;
  std::vector<std::string> names;             // abnormality terms, planted order
  std::vector<std::string> template_texts;    // as written in reports
  std::vector<std::vector<std::string>> slot_variants;  // enabled normal sentences per slot
  std::vector<std::vector<int>> groups;
  std::vector<double> group_probability;
  std::vector<double> group_cofire;
  std::vector<int> group_of;                  // abnormality -> group
  double scale = 0.0;

  double marginal(int abnormality) const;
  double pair_probability(int a, int b) const;
  double expected_templates() const;
};

SyntheticPlan plan(const SyntheticConfig& config);

struct SplitBookkeeping {
  int sentences = 0;
  int template_sentences = 0;
  double ratio() const { return sentences == 0 ? 0.0 : static_cast<double>(template_sentences) / sentences; }
};

struct RawSynthetic {
  corpus::RawCorpus corpus;
  SyntheticPlan plan;
  SplitBookkeeping train, val, test;
};

// Procedurally rendered motif images with grammar-generated reports.
RawSynthetic generate_raw(const SyntheticConfig& config);

corpus::PrepareOptions synthetic_prepare_options();

// generate_raw followed by corpus::prepare.
corpus::Dataset generate_synthetic(const SyntheticConfig& config,
                                   const corpus::PrepareOptions& options = synthetic_prepare_options());

// Renders the motif for one abnormality into an otherwise empty image (used by
// tests and by inspect).
corpus::Image render_motif(int abnormality, int abnormalities, int image_size);

}  // namespace relpara::synthetic
