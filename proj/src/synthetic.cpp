#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "util.hpp"

namespace relpara::synthetic {

namespace {

const std::vector<std::string> kNames = {
    "opacity",   "cardiomegaly", "atelectasis", "nodule",    "granuloma",   "scoliosis",  "emphysema",
    "calcinosis", "spondylosis", "hyperinflation", "osteophyte", "consolidation", "infiltrate", "fibrosis",
    "kyphosis",  "adenopathy",   "bronchiectasis", "cicatrix",  "hernia",      "deformity"};

const std::vector<std::string> kAdjectives = {"mild", "focal", "scattered", "small", "moderate"};
const std::vector<std::string> kLocations = {"right upper", "left lower", "right lower", "left upper"};

const std::vector<std::vector<std::string>> kSlots = {
    {"The heart size is normal.", "The heart is normal in size.", "Heart size is within normal limits.",
     "The cardiac silhouette is normal."},
    {"The lungs are clear.", "Lungs are clear bilaterally.", "The lungs are clear without focal consolidation.",
     "No focal airspace disease."},
    {"No pleural effusion or pneumothorax.", "There is no pleural effusion.", "No pneumothorax is seen.",
     "The costophrenic angles are sharp."},
    {"No acute bony abnormality.", "The osseous structures are intact.", "Visualized bones are unremarkable.",
     "No acute osseous abnormality."},
    {"The mediastinum is unremarkable.", "Mediastinal contours are normal.", "The mediastinal silhouette is stable.",
     "Hilar contours are within normal limits."},
    {"The pulmonary vasculature is normal.", "Pulmonary vascularity is normal.", "No vascular congestion.",
     "Vascular markings are unremarkable."},
};

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

std::string template_text(const std::string& name, int abnormality, int k) {
  const std::string& adj = kAdjectives[static_cast<std::size_t>(abnormality + k) % kAdjectives.size()];
  const std::string& loc = kLocations[static_cast<std::size_t>(abnormality + k) % kLocations.size()];
  switch (k % 4) {
    case 0: return "There is " + adj + " " + name + ".";
    case 1: return capitalize(adj) + " " + name + " in the " + loc + " lobe.";
    case 2: return capitalize(name) + " is again noted.";
    default: return "Findings suggest " + name + " near the " + loc + " hilum.";
  }
}

bool motif_pixel(int pattern, int y, int x, int size) {
  const int last = size - 1;
  switch (pattern % 10) {
    case 0: return true;
    case 1: return y == 0 || x == 0 || y == last || x == last;
    case 2: return std::abs(2 * y - last) <= 1 || std::abs(2 * x - last) <= 1;
    case 3: return y == x || y == last - x;
    case 4: return y % 2 == 0;
    case 5: return x % 2 == 0;
    case 6: return (y + x) % 2 == 0;
    case 7: return y % 3 == 0 && x % 3 == 0;
    case 8: return x <= y;
    default: return std::abs(2 * y - last) + std::abs(2 * x - last) <= last + 1 &&
                    std::abs(2 * y - last) + std::abs(2 * x - last) >= last - 1;
  }
}

struct Layout {
  int cell;
  int motif;
  int per_side;
};

Layout layout_for(int abnormalities, int image_size) {
  const int per_side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(abnormalities))));
  Layout l;
  l.per_side = per_side;
  l.cell = image_size / per_side;
  l.motif = std::min(l.cell - 2, 8);
  require(l.motif >= 3, ErrorKind::InvalidArgument,
          "image_size " + std::to_string(image_size) + " is too small for " + std::to_string(abnormalities) +
              " motifs");
  return l;
}

void stamp(std::vector<double>& canvas, int image_size, const Layout& layout, int abnormality, double intensity,
           int dy, int dx) {
  const int row = abnormality / layout.per_side;
  const int col = abnormality % layout.per_side;
  const int oy = row * layout.cell + (layout.cell - layout.motif) / 2 + dy;
  const int ox = col * layout.cell + (layout.cell - layout.motif) / 2 + dx;
  for (int y = 0; y < layout.motif; ++y) {
    for (int x = 0; x < layout.motif; ++x) {
      if (!motif_pixel(abnormality, y, x, layout.motif)) continue;
      const int py = oy + y;
      const int px = ox + x;
      if (py < 0 || px < 0 || py >= image_size || px >= image_size) continue;
      auto& v = canvas[static_cast<std::size_t>(py) * image_size + px];
      v = std::min(1.0, v + intensity);
    }
  }
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

std::size_t distinct_tokens(const std::vector<std::string>& sentences) {
  std::set<std::string> seen;
  for (const auto& s : sentences) {
    for (auto& t : corpus::tokenize(s)) seen.insert(std::move(t));
  }
  return seen.size();
}

}  // namespace

double SyntheticPlan::marginal(int abnormality) const {
  const auto g = static_cast<std::size_t>(group_of[static_cast<std::size_t>(abnormality)]);
  const double planted = group_probability[g] * group_cofire[g];
  return 1.0 - (1.0 - planted) * (1.0 - config.background);
}

double SyntheticPlan::pair_probability(int a, int b) const {
  if (a == b) return marginal(a);
  const auto ga = static_cast<std::size_t>(group_of[static_cast<std::size_t>(a)]);
  const auto gb = static_cast<std::size_t>(group_of[static_cast<std::size_t>(b)]);
  if (ga != gb) return marginal(a) * marginal(b);
  const double pi = group_probability[ga];
  const double beta = config.background;
  const double member = group_cofire[ga] + (1.0 - group_cofire[ga]) * beta;
  return pi * member * member + (1.0 - pi) * beta * beta;
}

double SyntheticPlan::expected_templates() const {
  double total = 0.0;
  for (int a = 0; a < config.abnormalities; ++a) {
    total += marginal(a) * static_cast<double>(config.triggers[static_cast<std::size_t>(a)].size());
  }
  return total;
}

SyntheticPlan plan(const SyntheticConfig& input) {
  SyntheticPlan p;
  p.config = input;
  auto& cfg = p.config;
  require(cfg.abnormalities >= 1, ErrorKind::InvalidArgument, "synthetic: abnormalities must be >= 1");
  require(cfg.templates >= 0, ErrorKind::InvalidArgument, "synthetic: templates must be >= 0");
  require(cfg.train_samples >= 1 && cfg.val_samples >= 0 && cfg.test_samples >= 0, ErrorKind::InvalidArgument,
          "synthetic: sample counts must be positive");
  require(cfg.retrieval_ratio >= 0.0 && cfg.retrieval_ratio <= 1.0, ErrorKind::InvalidArgument,
          "synthetic: retrieval_ratio must lie in [0, 1]");
  require(cfg.retrieval_ratio < 1.0, ErrorKind::InvalidArgument,
          "synthetic: retrieval_ratio 1 is unattainable with normal_sentences >= 1");
  require(cfg.cofire > 0.0 && cfg.cofire <= 1.0, ErrorKind::InvalidArgument, "synthetic: cofire must lie in (0, 1]");
  require(cfg.background >= 0.0 && cfg.background < 1.0, ErrorKind::InvalidArgument,
          "synthetic: background must lie in [0, 1)");
  require(cfg.normal_sentences >= 1 && cfg.normal_sentences <= static_cast<int>(kSlots.size()),
          ErrorKind::InvalidArgument,
          "synthetic: normal_sentences must lie in [1, " + std::to_string(kSlots.size()) + "]");
  require(cfg.image_size >= 8 && cfg.image_size % 8 == 0, ErrorKind::InvalidArgument,
          "synthetic: image_size must be a positive multiple of 8");
  layout_for(cfg.abnormalities, cfg.image_size);

  const auto m = static_cast<std::size_t>(cfg.abnormalities);
  for (std::size_t a = 0; a < m; ++a) {
    p.names.push_back(a < kNames.size() ? kNames[a] : "finding" + std::to_string(a));
  }

  if (cfg.triggers.empty()) {
    cfg.triggers.assign(m, {});
    for (int t = 0; t < cfg.templates; ++t) cfg.triggers[static_cast<std::size_t>(t) % m].push_back(t);
  }
  require(cfg.triggers.size() == m, ErrorKind::InvalidArgument, "synthetic: trigger map must list every abnormality");
  std::vector<int> reached(static_cast<std::size_t>(cfg.templates), 0);
  for (const auto& list : cfg.triggers) {
    for (int t : list) {
      require(t >= 0 && t < cfg.templates, ErrorKind::InvalidArgument,
              "synthetic: trigger map references template " + std::to_string(t) + " outside [0, " +
                  std::to_string(cfg.templates) + ")");
      reached[static_cast<std::size_t>(t)] = 1;
    }
  }
  for (int t = 0; t < cfg.templates; ++t) {
    require(reached[static_cast<std::size_t>(t)] == 1, ErrorKind::InvalidArgument,
            "synthetic: trigger map leaves template " + std::to_string(t) + " unreachable");
  }

  // Template text for the k-th trigger of each abnormality; templates shared by
  // several abnormalities take the first owner's wording.
  p.template_texts.assign(static_cast<std::size_t>(cfg.templates), "");
  for (std::size_t a = 0; a < m; ++a) {
    int k = 0;
    for (int t : cfg.triggers[a]) {
      auto& text = p.template_texts[static_cast<std::size_t>(t)];
      if (text.empty()) text = template_text(p.names[a], static_cast<int>(a), k);
      ++k;
    }
  }
  {
    std::set<std::string> unique;
    for (const auto& t : p.template_texts) {
      require(unique.insert(corpus::normalize_sentence(t)).second, ErrorKind::InvalidArgument,
              "synthetic: duplicate template text '" + t + "'; reduce templates per abnormality");
    }
  }

  if (cfg.clusters.empty()) {
    if (m >= 2) cfg.clusters.push_back({{0, 1}, 1.0});
    if (m >= 4) cfg.clusters.push_back({{2, 3}, 1.0});
  }
  p.group_of.assign(m, -1);
  for (const auto& cluster : cfg.clusters) {
    require(!cluster.members.empty() && cluster.weight > 0.0, ErrorKind::InvalidArgument,
            "synthetic: clusters need members and a positive weight");
    const int g = static_cast<int>(p.groups.size());
    for (int a : cluster.members) {
      require(a >= 0 && static_cast<std::size_t>(a) < m, ErrorKind::InvalidArgument,
              "synthetic: cluster member " + std::to_string(a) + " out of range");
      require(p.group_of[static_cast<std::size_t>(a)] < 0, ErrorKind::InvalidArgument,
              "synthetic: abnormality " + std::to_string(a) + " belongs to two clusters");
      p.group_of[static_cast<std::size_t>(a)] = g;
    }
    p.groups.push_back(cluster.members);
    p.group_cofire.push_back(cluster.members.size() > 1 ? cfg.cofire : 1.0);
  }
  std::vector<double> weights;
  for (const auto& cluster : cfg.clusters) weights.push_back(cluster.weight);
  for (std::size_t a = 0; a < m; ++a) {
    if (p.group_of[a] >= 0) continue;
    p.group_of[a] = static_cast<int>(p.groups.size());
    p.groups.push_back({static_cast<int>(a)});
    p.group_cofire.push_back(1.0);
    weights.push_back(1.0);
  }

  // Bisection on the activation scale: expected templates per report must equal
  // ratio * normal / (1 - ratio).
  const double target = cfg.retrieval_ratio * cfg.normal_sentences / (1.0 - cfg.retrieval_ratio);
  auto expected_at = [&](double s) {
    p.group_probability.resize(weights.size());
    for (std::size_t g = 0; g < weights.size(); ++g) p.group_probability[g] = std::min(1.0, s * weights[g]);
    return p.expected_templates();
  };
  const double hi_scale = 1.0 / *std::min_element(weights.begin(), weights.end());
  require(expected_at(0.0) <= target + 1e-12, ErrorKind::InvalidArgument,
          "synthetic: background rate alone exceeds the requested retrieval_ratio");
  require(expected_at(hi_scale) >= target - 1e-12, ErrorKind::InvalidArgument,
          "synthetic: retrieval_ratio unattainable; add templates or normal-sentence slots");
  double lo = 0.0;
  double hi = hi_scale;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected_at(mid) < target ? lo : hi) = mid;
  }
  p.scale = 0.5 * (lo + hi);
  expected_at(p.scale);

  // Enable sentence variants round robin until the lexicon reaches vocab_size.
  p.slot_variants.assign(static_cast<std::size_t>(cfg.normal_sentences), {});
  std::vector<std::string> lexicon = p.template_texts;
  for (std::size_t s = 0; s < p.slot_variants.size(); ++s) {
    p.slot_variants[s].push_back(kSlots[s][0]);
    lexicon.push_back(kSlots[s][0]);
  }
  for (std::size_t v = 1; v < kSlots[0].size(); ++v) {
    for (std::size_t s = 0; s < p.slot_variants.size(); ++s) {
      if (distinct_tokens(lexicon) >= static_cast<std::size_t>(cfg.vocab_size)) break;
      p.slot_variants[s].push_back(kSlots[s][v]);
      lexicon.push_back(kSlots[s][v]);
    }
  }
  return p;
}

corpus::Image render_motif(int abnormality, int abnormalities, int image_size) {
  const Layout layout = layout_for(abnormalities, image_size);
  corpus::Image img{image_size, image_size, 1,
                    std::vector<double>(static_cast<std::size_t>(image_size) * image_size, 0.0)};
  stamp(img.data, image_size, layout, abnormality, 1.0, 0, 0);
  return img;
}

RawSynthetic generate_raw(const SyntheticConfig& config) {
  RawSynthetic out;
  out.plan = plan(config);
  const SyntheticPlan& p = out.plan;
  const SyntheticConfig& cfg = p.config;
  const Layout layout = layout_for(cfg.abnormalities, cfg.image_size);
  Rng rng(cfg.seed);
  out.corpus.seed = cfg.seed;

  auto make_split = [&](const char* name, int count, SplitBookkeeping& book) {
    std::vector<corpus::RawRecord> records;
    records.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      corpus::RawRecord r;
      char id[64];
      std::snprintf(id, sizeof id, "%s-%05d", name, i);
      r.image_id = id;

      std::vector<int> active(static_cast<std::size_t>(cfg.abnormalities), 0);
      for (std::size_t g = 0; g < p.groups.size(); ++g) {
        const bool on = rng.bernoulli(p.group_probability[g]);
        for (int a : p.groups[g]) {
          const bool planted = on && rng.bernoulli(p.group_cofire[g]);
          const bool noise = rng.bernoulli(cfg.background);
          active[static_cast<std::size_t>(a)] = (planted || noise) ? 1 : 0;
        }
      }

      std::vector<double> canvas(static_cast<std::size_t>(cfg.image_size) * cfg.image_size);
      for (auto& v : canvas) v = rng.uniform(0.0, 0.15);
      for (int a = 0; a < cfg.abnormalities; ++a) {
        if (!active[static_cast<std::size_t>(a)]) continue;
        const double intensity = rng.uniform(0.7, 1.0);
        const int dy = static_cast<int>(rng.below(3)) - 1;
        const int dx = static_cast<int>(rng.below(3)) - 1;
        stamp(canvas, cfg.image_size, layout, a, intensity, dy, dx);
      }
      for (auto& v : canvas) v = quantize(v);
      r.image = corpus::Image{cfg.image_size, cfg.image_size, 1, std::move(canvas)};

      for (const auto& variants : p.slot_variants) {
        // The first phrasing dominates so greedy decoding has a clear mode.
        std::size_t pick = 0;
        if (variants.size() > 1 && !rng.bernoulli(0.6)) pick = 1 + rng.below(variants.size() - 1);
        r.sentences.push_back({variants[pick], false});
      }
      std::vector<int> emitted(static_cast<std::size_t>(cfg.templates), 0);
      for (int a = 0; a < cfg.abnormalities; ++a) {
        if (!active[static_cast<std::size_t>(a)]) continue;
        r.tags.push_back(p.names[static_cast<std::size_t>(a)]);
        for (int t : cfg.triggers[static_cast<std::size_t>(a)]) {
          if (emitted[static_cast<std::size_t>(t)]) continue;
          emitted[static_cast<std::size_t>(t)] = 1;
          r.sentences.push_back({p.template_texts[static_cast<std::size_t>(t)], true});
          ++book.template_sentences;
        }
      }
      book.sentences += static_cast<int>(r.sentences.size());
      records.push_back(std::move(r));
    }
    return records;
  };

  out.corpus.train = make_split("train", cfg.train_samples, out.train);
  out.corpus.val = make_split("val", cfg.val_samples, out.val);
  out.corpus.test = make_split("test", cfg.test_samples, out.test);
  return out;
}

corpus::PrepareOptions synthetic_prepare_options() {
  corpus::PrepareOptions o;
  o.min_token_freq = 3;
  o.min_tag_freq = 3;
  o.min_template_freq = 3;
  o.max_words = 15;
  return o;
}

corpus::Dataset generate_synthetic(const SyntheticConfig& config, const corpus::PrepareOptions& options) {
  RawSynthetic raw = generate_raw(config);
  corpus::Dataset ds = corpus::prepare(raw.corpus, options);
  if (ds.templates.size() != raw.plan.template_texts.size()) {
    warn("synthetic: " + std::to_string(raw.plan.template_texts.size() - ds.templates.size()) +
         " planted templates fall below min_template_freq in the training split");
  }
  return ds;
}

}  // namespace relpara::synthetic
