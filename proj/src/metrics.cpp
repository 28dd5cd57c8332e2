#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "util.hpp"

namespace relpara::metrics {

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const Tokens& tokens, int n) {
  NgramCounts counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
    counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                    tokens.begin() + static_cast<std::ptrdiff_t>(i) + n)]++;
  }
  return counts;
}

void check_pairs(std::size_t candidates, std::size_t references, const char* metric) {
  require(candidates > 0, ErrorKind::InvalidArgument, std::string(metric) + ": empty candidate set");
  require(candidates == references, ErrorKind::InvalidArgument,
          std::string(metric) + ": " + std::to_string(candidates) + " candidates for " + std::to_string(references) +
              " references");
}

}  // namespace

double bleu(std::span<const Tokens> candidates, std::span<const Tokens> references, int n) {
  check_pairs(candidates.size(), references.size(), "bleu");
  require(n >= 1 && n <= 4, ErrorKind::InvalidArgument, "bleu: n must be in 1..4");
  // Product then root: four precisions in (0, 1] cannot underflow, and n = 1
  // returns the precision itself.
  double product = 1.0;
  for (int k = 1; k <= n; ++k) {
    long matched = 0;
    long total = 0;
    for (std::size_t s = 0; s < candidates.size(); ++s) {
      const NgramCounts cand = ngrams(candidates[s], k);
      const NgramCounts ref = ngrams(references[s], k);
      for (const auto& [gram, count] : cand) {
        total += count;
        auto it = ref.find(gram);
        if (it != ref.end()) matched += std::min(count, it->second);
      }
    }
    if (matched == 0 || total == 0) return 0.0;
    product *= static_cast<double>(matched) / static_cast<double>(total);
  }
  double c = 0.0;
  double r = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    c += static_cast<double>(candidates[s].size());
    r += static_cast<double>(references[s].size());
  }
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  const double mean = n == 1 ? product : n == 2 ? std::sqrt(product) : std::pow(product, 1.0 / n);
  return bp * mean;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_pair(const Tokens& candidate, const Tokens& reference, double beta) {
  if (candidate.empty() && reference.empty()) return 1.0;
  const std::size_t lcs = lcs_length(candidate, reference);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(reference.size());
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

double rouge_l(std::span<const Tokens> candidates, std::span<const Tokens> references, double beta) {
  check_pairs(candidates.size(), references.size(), "rouge_l");
  require(beta > 0.0, ErrorKind::InvalidArgument, "rouge_l: beta must be positive");
  double sum = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) sum += rouge_l_pair(candidates[s], references[s], beta);
  return sum / static_cast<double>(candidates.size());
}

CiderMode parse_cider_mode(std::string_view name) {
  if (name == "classic") return CiderMode::Classic;
  if (name == "d" || name == "D" || name == "cider-d") return CiderMode::D;
  fail(ErrorKind::InvalidArgument, "unknown CIDEr mode '" + std::string(name) + "' (expected classic or d)");
}

std::string_view to_string(CiderMode mode) { return mode == CiderMode::Classic ? "classic" : "d"; }

std::vector<double> cider_per_sample(std::span<const Tokens> candidates, std::span<const Tokens> references,
                                     CiderMode mode) {
  check_pairs(candidates.size(), references.size(), "cider");
  require(references.size() >= 2, ErrorKind::InvalidArgument,
          "cider: document frequencies need at least two reference documents");
  const double docs = static_cast<double>(references.size());
  const double sigma = 6.0;
  std::vector<double> scores(candidates.size(), 0.0);
  for (int n = 1; n <= 4; ++n) {
    std::vector<NgramCounts> ref_grams;
    std::map<std::vector<std::string>, int> df;
    ref_grams.reserve(references.size());
    for (const Tokens& r : references) {
      ref_grams.push_back(ngrams(r, n));
      for (const auto& kv : ref_grams.back()) df[kv.first]++;
    }
    auto idf = [&](const std::vector<std::string>& gram) {
      auto it = df.find(gram);
      return std::log(docs / std::max(1.0, it == df.end() ? 0.0 : static_cast<double>(it->second)));
    };
    for (std::size_t s = 0; s < candidates.size(); ++s) {
      const NgramCounts cand = ngrams(candidates[s], n);
      const NgramCounts& ref = ref_grams[s];
      std::map<std::vector<std::string>, double> vc;
      std::map<std::vector<std::string>, double> vr;
      for (const auto& [g, c] : cand) vc[g] = c * idf(g);
      for (const auto& [g, c] : ref) vr[g] = c * idf(g);
      double norm_c = 0.0;
      double norm_r = 0.0;
      for (const auto& kv : vc) norm_c += kv.second * kv.second;
      for (const auto& kv : vr) norm_r += kv.second * kv.second;
      double dot = 0.0;
      for (const auto& [g, w] : vc) {
        auto it = vr.find(g);
        if (it == vr.end()) continue;
        dot += mode == CiderMode::D ? std::min(w, it->second) * it->second : w * it->second;
      }
      double sim = 0.0;
      if (norm_c > 0.0 && norm_r > 0.0) sim = dot / (std::sqrt(norm_c) * std::sqrt(norm_r));
      if (mode == CiderMode::D) {
        const double delta = static_cast<double>(candidates[s].size()) - static_cast<double>(references[s].size());
        sim *= std::exp(-(delta * delta) / (2.0 * sigma * sigma));
      }
      scores[s] += sim;
    }
  }
  for (double& v : scores) v = v / 4.0 * 10.0;
  return scores;
}

double cider(std::span<const Tokens> candidates, std::span<const Tokens> references, CiderMode mode) {
  const auto per = cider_per_sample(candidates, references, mode);
  double sum = 0.0;
  for (double v : per) sum += v;
  return sum / static_cast<double>(per.size());
}

std::optional<double> auc_binary(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorKind::InvalidArgument, "auc: scores and labels differ in length");
  std::vector<double> pos;
  std::vector<double> neg;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, ErrorKind::InvalidArgument, "auc: labels must be 0 or 1");
    (labels[i] ? pos : neg).push_back(scores[i]);
  }
  if (pos.empty() || neg.empty()) return std::nullopt;
  // Rank form of the pair count: sort negatives once, then binary-search.
  std::sort(neg.begin(), neg.end());
  double credit = 0.0;
  for (double p : pos) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    const auto hi = std::upper_bound(neg.begin(), neg.end(), p);
    credit += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return credit / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

AucResult macro_auc(std::span<const std::vector<double>> scores, std::span<const std::vector<int>> labels) {
  require(!scores.empty(), ErrorKind::InvalidArgument, "auc: no samples");
  require(scores.size() == labels.size(), ErrorKind::InvalidArgument, "auc: score and label sample counts differ");
  const std::size_t m = scores.front().size();
  for (std::size_t s = 0; s < scores.size(); ++s) {
    require(scores[s].size() == m && labels[s].size() == m, ErrorKind::Dimension,
            "auc: sample " + std::to_string(s) + " does not have " + std::to_string(m) + " scores and labels");
  }
  AucResult out;
  double sum = 0.0;
  int used = 0;
  std::vector<double> col_s(scores.size());
  std::vector<int> col_l(scores.size());
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t s = 0; s < scores.size(); ++s) {
      col_s[s] = scores[s][j];
      col_l[s] = labels[s][j];
    }
    auto a = auc_binary(col_s, col_l);
    out.per_label.push_back(a);
    if (a) {
      sum += *a;
      ++used;
    } else {
      out.skipped.push_back(static_cast<int>(j));
    }
  }
  require(used > 0, ErrorKind::InvalidArgument, "auc: no label has both positive and negative samples");
  out.macro = sum / used;
  return out;
}

std::string report_text(const corpus::Sample& sample) {
  std::string out;
  for (const auto& s : sample.report) {
    const std::string t = corpus::normalize_sentence(s.raw_text);
    if (t.empty()) continue;
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

EvalResult evaluate(std::span<const Candidate> generated, std::span<const corpus::Sample> gold,
                    const EvalOptions& options) {
  require(!gold.empty(), ErrorKind::InvalidArgument, "evaluate: empty gold split");
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    require(by_id.emplace(generated[i].image_id, i).second, ErrorKind::InvalidArgument,
            "evaluate: duplicate generated image_id " + generated[i].image_id);
  }
  std::vector<std::string> missing;
  std::unordered_set<std::string> gold_ids;
  for (const auto& s : gold) {
    gold_ids.insert(s.image_id);
    if (!by_id.count(s.image_id)) missing.push_back(s.image_id);
  }
  std::vector<std::string> extra;
  for (const auto& c : generated) {
    if (!gold_ids.count(c.image_id)) extra.push_back(c.image_id);
  }
  auto list = [](const std::vector<std::string>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size() && i < 5; ++i) out += (i ? "," : "") + ids[i];
    if (ids.size() > 5) out += ",... (" + std::to_string(ids.size()) + " total)";
    return out;
  };
  if (!missing.empty()) fail(ErrorKind::MissingId, "evaluate: no generated report for image_id " + list(missing));
  if (!extra.empty()) fail(ErrorKind::MissingId, "evaluate: generated image_id not in gold split: " + list(extra));

  std::vector<Tokens> cands;
  std::vector<Tokens> refs;
  bool have_scores = true;
  for (const auto& s : gold) {
    const Candidate& c = generated[by_id.at(s.image_id)];
    cands.push_back(corpus::tokenize(c.text, options.mode));
    refs.push_back(corpus::tokenize(report_text(s), options.mode));
    if (c.abnormality_scores.size() != s.labels.size() || s.labels.empty()) have_scores = false;
  }

  EvalResult r;
  for (int n = 1; n <= 4; ++n) r.bleu[n - 1] = bleu(cands, refs, n);
  r.rouge_l = rouge_l(cands, refs, options.rouge_beta);
  std::vector<double> per_cider(gold.size(), 0.0);
  if (gold.size() >= 2) {
    per_cider = cider_per_sample(cands, refs, options.cider_mode);
    for (double v : per_cider) r.cider += v;
    r.cider /= static_cast<double>(per_cider.size());
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    SampleScore row;
    row.image_id = gold[i].image_id;
    row.bleu1 = bleu(std::span(&cands[i], 1), std::span(&refs[i], 1), 1);
    row.rouge_l = rouge_l_pair(cands[i], refs[i], options.rouge_beta);
    row.cider = per_cider[i];
    r.samples.push_back(std::move(row));
  }
  if (have_scores) {
    std::vector<std::vector<double>> scores;
    std::vector<std::vector<int>> labels;
    for (const auto& s : gold) {
      scores.push_back(generated[by_id.at(s.image_id)].abnormality_scores);
      labels.push_back(s.labels);
    }
    bool any_pair = false;
    for (std::size_t j = 0; j < labels.front().size() && !any_pair; ++j) {
      int pos = 0;
      for (const auto& l : labels) pos += l[j];
      any_pair = pos > 0 && pos < static_cast<int>(labels.size());
    }
    if (any_pair) r.auc = macro_auc(scores, labels);
  }
  return r;
}

nlohmann::ordered_json to_json(const EvalResult& r, bool per_sample) {
  nlohmann::ordered_json j;
  j["cider"] = r.cider;
  j["rouge_l"] = r.rouge_l;
  for (int n = 1; n <= 4; ++n) j["bleu_" + std::to_string(n)] = r.bleu[n - 1];
  if (r.auc) {
    j["auc"] = r.auc->macro;
    j["auc_skipped_labels"] = r.auc->skipped;
  } else {
    j["auc"] = nullptr;
  }
  j["samples"] = r.samples.size();
  if (per_sample) {
    auto rows = nlohmann::ordered_json::array();
    for (const auto& s : r.samples) {
      rows.push_back({{"image_id", s.image_id}, {"bleu_1", s.bleu1}, {"rouge_l", s.rouge_l}, {"cider", s.cider}});
    }
    j["per_sample"] = std::move(rows);
  }
  return j;
}

std::string format_table(const EvalResult& r) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %-8s %-8s %-8s %-8s %-8s %-8s\n", "CIDEr", "ROUGE-L", "BLEU-1", "BLEU-2",
                "BLEU-3", "BLEU-4", "AUC");
  out << line;
  char auc[16] = "-";
  if (r.auc) std::snprintf(auc, sizeof auc, "%.4f", r.auc->macro);
  std::snprintf(line, sizeof line, "%-8.4f %-8.4f %-8.4f %-8.4f %-8.4f %-8.4f %-8s\n", r.cider, r.rouge_l, r.bleu[0],
                r.bleu[1], r.bleu[2], r.bleu[3], auc);
  out << line;
  return out.str();
}

}  // namespace relpara::metrics
