#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"

namespace relpara::metrics {

using Tokens = std::vector<std::string>;

// Corpus-level BLEU-n (clipped counts summed over the corpus, no smoothing).
double bleu(std::span<const Tokens> candidates, std::span<const Tokens> references, int n);

// Mean over pairs of the LCS F-measure.
double rouge_l(std::span<const Tokens> candidates, std::span<const Tokens> references, double beta = 1.0);
double rouge_l_pair(const Tokens& candidate, const Tokens& reference, double beta = 1.0);
std::size_t lcs_length(const Tokens& a, const Tokens& b);

enum class CiderMode { Classic, D };
CiderMode parse_cider_mode(std::string_view name);
std::string_view to_string(CiderMode mode);

// TF-IDF cosine per n-gram order 1..4 with document frequencies over the
// references, averaged over orders and scaled by 10. CiderMode::D adds count
// clipping and the Gaussian length penalty (sigma 6).
double cider(std::span<const Tokens> candidates, std::span<const Tokens> references, CiderMode mode = CiderMode::Classic);
std::vector<double> cider_per_sample(std::span<const Tokens> candidates, std::span<const Tokens> references,
                                     CiderMode mode = CiderMode::Classic);

// Mann-Whitney AUC with half credit for ties; nullopt when a class is missing.
std::optional<double> auc_binary(std::span<const double> scores, std::span<const int> labels);

struct AucResult {
  double macro = 0.0;
  std::vector<std::optional<double>> per_label;
  std::vector<int> skipped;  // labels lacking positives or negatives
};

// scores and labels are per sample, each of length M.
AucResult macro_auc(std::span<const std::vector<double>> scores, std::span<const std::vector<int>> labels);

struct Candidate {
  std::string image_id;
  std::string text;
  std::vector<double> abnormality_scores;  // empty when not available
};

struct EvalOptions {
  corpus::TokenizeMode mode = corpus::TokenizeMode::Whitespace;
  double rouge_beta = 1.0;
  CiderMode cider_mode = CiderMode::Classic;
};

struct SampleScore {
  std::string image_id;
  double bleu1 = 0.0;  // sentence-level, for the detail table only
  double rouge_l = 0.0;
  double cider = 0.0;
};

struct EvalResult {
  double bleu[4] = {0, 0, 0, 0};
  double rouge_l = 0.0;
  double cider = 0.0;
  std::optional<AucResult> auc;
  std::vector<SampleScore> samples;  // gold order
};

// Gold report text: normalized sentences joined by single spaces.
std::string report_text(const corpus::Sample& sample);

// Joins on image_id; any id present on one side only is an error naming it.
EvalResult evaluate(std::span<const Candidate> generated, std::span<const corpus::Sample> gold,
                    const EvalOptions& options = {});

// Machine record in table order: CIDEr, ROUGE-L, BLEU-1..4, then AUC.
nlohmann::ordered_json to_json(const EvalResult& result, bool per_sample = false);
std::string format_table(const EvalResult& result);

}  // namespace relpara::metrics
