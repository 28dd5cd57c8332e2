#include "corpus.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "util.hpp"

namespace relpara::corpus {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
char lower(unsigned char c) { return static_cast<char>(std::tolower(c)); }

// Length of the UTF-8 sequence starting at lead byte c; invalid leads count as 1.
std::size_t utf8_length(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c >> 5) == 0x6) return 2;
  if ((c >> 4) == 0xe) return 3;
  if ((c >> 3) == 0x1e) return 4;
  return 1;
}

std::vector<std::string> split_tab_line(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      return fields;
    }
    fields.emplace_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    out.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

int parse_int(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::Format, std::string("malformed ") + what + " field '" + s + "'");
  }
}

// Frequency-descending, then lexicographic.
template <class Map>
std::vector<std::pair<std::string, int>> ranked(const Map& counts, int min_freq) {
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [key, count] : counts) {
    if (count >= min_freq) kept.emplace_back(key, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return kept;
}

}  // namespace

TokenizeMode parse_tokenize_mode(std::string_view name) {
  if (name == "whitespace") return TokenizeMode::Whitespace;
  if (name == "char") return TokenizeMode::Char;
  fail(ErrorKind::InvalidArgument, "unknown tokenize mode '" + std::string(name) + "'");
}

std::string_view to_string(TokenizeMode mode) { return mode == TokenizeMode::Char ? "char" : "whitespace"; }

std::vector<std::string> tokenize(std::string_view text, TokenizeMode mode) {
  std::vector<std::string> tokens;
  if (mode == TokenizeMode::Char) {
    for (std::size_t i = 0; i < text.size();) {
      const auto c = static_cast<unsigned char>(text[i]);
      const std::size_t len = std::min(utf8_length(c), text.size() - i);
      if (len == 1 && is_space(c)) {
        ++i;
        continue;
      }
      std::string tok(text.substr(i, len));
      if (len == 1) tok[0] = lower(c);
      tokens.push_back(std::move(tok));
      i += len;
    }
    return tokens;
  }

  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current.push_back(lower(c));
    }
  }
  flush();
  return tokens;
}

std::string normalize_sentence(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(lower(c));
  }
  if (!out.empty() && out.back() == '.') out.pop_back();
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (std::size_t i = 0; i < text.size(); ++i) {
    current.push_back(text[i]);
    const char c = text[i];
    const bool terminal = c == '.' || c == '!' || c == '?';
    const bool boundary = i + 1 == text.size() || is_space(static_cast<unsigned char>(text[i + 1]));
    if (terminal && boundary) {
      const std::string norm = normalize_sentence(current);
      if (!norm.empty()) out.push_back(current.substr(current.find_first_not_of(" \t\r\n")));
      current.clear();
    }
  }
  if (!normalize_sentence(current).empty()) out.push_back(current.substr(current.find_first_not_of(" \t\r\n")));
  return out;
}

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  tokens_ = {"<pad>", "<start>", "<end>", "<unk>"};
  tokens_.insert(tokens_.end(), std::make_move_iterator(tokens.begin()), std::make_move_iterator(tokens.end()));
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const bool inserted = index_.emplace(tokens_[i], static_cast<int>(i)).second;
    require(inserted, ErrorKind::InvalidArgument, "duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

int Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  require(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(), ErrorKind::InvalidArgument,
          "token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kPad || id == kStart || id == kEnd) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

std::string Vocabulary::serialize() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < tokens_.size(); ++i) os << tokens_[i] << '\t' << i << '\n';
  return os.str();
}

Vocabulary Vocabulary::parse(std::string_view text) {
  std::vector<std::string> tokens;
  const auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto fields = split_tab_line(lines[i]);
    require(fields.size() == 2, ErrorKind::Format, "vocabulary line " + std::to_string(i + 1) + " is malformed");
    require(parse_int(fields[1], "vocabulary id") == static_cast<int>(i), ErrorKind::Format,
            "vocabulary ids are not contiguous at line " + std::to_string(i + 1));
    if (i >= kReserved) tokens.push_back(fields[0]);
  }
  require(lines.size() >= kReserved, ErrorKind::Format, "vocabulary is missing reserved entries");
  Vocabulary v(std::move(tokens));
  for (int i = 0; i < kReserved; ++i) {
    require(split_tab_line(lines[static_cast<std::size_t>(i)])[0] == v.tokens_[static_cast<std::size_t>(i)],
            ErrorKind::Format, "vocabulary reserved entry " + std::to_string(i) + " is wrong");
  }
  return v;
}

std::uint64_t Vocabulary::content_hash() const { return fnv1a(serialize()); }

Vocabulary build_vocabulary(std::span<const std::vector<std::string>> tokenized_sentences, int min_token_freq) {
  require(!tokenized_sentences.empty(), ErrorKind::InvalidArgument, "build_vocabulary: corpus is empty");
  require(min_token_freq >= 1, ErrorKind::InvalidArgument, "build_vocabulary: min_token_freq must be >= 1");
  std::map<std::string, int> counts;
  for (const auto& sentence : tokenized_sentences) {
    for (const auto& t : sentence) ++counts[t];
  }
  auto kept = ranked(counts, min_token_freq);
  require(!kept.empty(), ErrorKind::InvalidArgument,
          "build_vocabulary: every token falls below min_token_freq=" + std::to_string(min_token_freq));
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, count] : kept) tokens.push_back(std::move(tok));
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocabulary(std::span<const RawRecord> corpus, int min_token_freq, TokenizeMode mode) {
  std::vector<std::vector<std::string>> sentences;
  for (const auto& record : corpus) {
    for (const auto& s : record.sentences) sentences.push_back(tokenize(s.text, mode));
  }
  return build_vocabulary(sentences, min_token_freq);
}

// ---------------------------------------------------------- AbnormalityVocab

AbnormalityVocab::AbnormalityVocab(std::vector<std::string> terms) : terms_(std::move(terms)) {
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    const bool inserted = index_.emplace(terms_[i], static_cast<int>(i)).second;
    require(inserted, ErrorKind::InvalidArgument, "duplicate abnormality term '" + terms_[i] + "'");
  }
}

std::optional<int> AbnormalityVocab::index(std::string_view term) const {
  const auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> AbnormalityVocab::encode_labels(std::span<const std::string> tags) const {
  std::vector<int> labels(terms_.size(), 0);
  for (const auto& tag : tags) {
    if (auto i = index(normalize_sentence(tag))) labels[static_cast<std::size_t>(*i)] = 1;
  }
  return labels;
}

std::string AbnormalityVocab::serialize() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < terms_.size(); ++i) os << terms_[i] << '\t' << i << '\n';
  return os.str();
}

AbnormalityVocab AbnormalityVocab::parse(std::string_view text) {
  std::vector<std::string> terms;
  const auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto fields = split_tab_line(lines[i]);
    require(fields.size() == 2, ErrorKind::Format, "abnormality line " + std::to_string(i + 1) + " is malformed");
    require(parse_int(fields[1], "abnormality index") == static_cast<int>(i), ErrorKind::Format,
            "abnormality indices are not contiguous at line " + std::to_string(i + 1));
    terms.push_back(fields[0]);
  }
  return AbnormalityVocab(std::move(terms));
}

std::uint64_t AbnormalityVocab::content_hash() const { return fnv1a(serialize()); }

AbnormalityVocab build_abnormality_vocab(std::span<const RawRecord> corpus, int min_tag_freq) {
  require(min_tag_freq >= 1, ErrorKind::InvalidArgument, "min_tag_freq must be >= 1");
  std::map<std::string, int> counts;
  for (const auto& record : corpus) {
    // A tag counts once per record even if repeated.
    std::vector<std::string> seen;
    for (const auto& tag : record.tags) {
      const std::string t = normalize_sentence(tag);
      if (t.empty() || std::find(seen.begin(), seen.end(), t) != seen.end()) continue;
      seen.push_back(t);
      ++counts[t];
    }
  }
  std::vector<std::string> terms;
  for (auto& [term, count] : ranked(counts, min_tag_freq)) terms.push_back(std::move(term));
  return AbnormalityVocab(std::move(terms));
}

// ---------------------------------------------------------------- TemplateDb

TemplateDb::TemplateDb(std::vector<Template> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const bool inserted = index_.emplace(entries_[i].text, static_cast<int>(i) + 1).second;
    require(inserted, ErrorKind::InvalidArgument, "duplicate template '" + entries_[i].text + "'");
  }
}

const Template& TemplateDb::entry(int index) const {
  require(index >= 1 && static_cast<std::size_t>(index) <= entries_.size(), ErrorKind::InvalidArgument,
          "template index " + std::to_string(index) + " outside [1, " + std::to_string(entries_.size()) + "]");
  return entries_[static_cast<std::size_t>(index) - 1];
}

int TemplateDb::lookup(std::string_view text) const {
  const auto it = index_.find(normalize_sentence(text));
  return it == index_.end() ? 0 : it->second;
}

void TemplateDb::encode(const Vocabulary& vocab, TokenizeMode mode, std::size_t max_words) {
  for (auto& e : entries_) {
    e.token_ids = vocab.encode(tokenize(e.text, mode));
    if (e.token_ids.size() > max_words) e.token_ids.resize(max_words);
  }
}

std::string TemplateDb::serialize() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    os << (i + 1) << '\t' << entries_[i].frequency << '\t' << entries_[i].text << '\n';
  }
  return os.str();
}

TemplateDb TemplateDb::parse(std::string_view text) {
  std::vector<Template> entries;
  const auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto fields = split_tab_line(lines[i]);
    require(fields.size() == 3, ErrorKind::Format, "template line " + std::to_string(i + 1) + " is malformed");
    require(parse_int(fields[0], "template index") == static_cast<int>(i) + 1, ErrorKind::Format,
            "template indices are not contiguous at line " + std::to_string(i + 1));
    Template t;
    t.frequency = parse_int(fields[1], "template frequency");
    t.text = fields[2];
    entries.push_back(std::move(t));
  }
  return TemplateDb(std::move(entries));
}

std::uint64_t TemplateDb::content_hash() const { return fnv1a(serialize()); }

bool is_abnormal(std::string_view sentence, const AbnormalityVocab& abnormalities, TokenizeMode mode) {
  const auto tokens = tokenize(sentence, mode);
  for (const auto& term : abnormalities.terms()) {
    const auto needle = tokenize(term, mode);
    if (needle.empty() || needle.size() > tokens.size()) continue;
    if (std::search(tokens.begin(), tokens.end(), needle.begin(), needle.end()) != tokens.end()) return true;
  }
  return false;
}

TemplateDb mine_templates(std::span<const FlaggedSentence> sentences, int min_template_freq) {
  require(min_template_freq >= 1, ErrorKind::InvalidArgument, "min_template_freq must be >= 1");
  std::map<std::string, int> counts;
  for (const auto& s : sentences) {
    if (!s.abnormal) continue;
    const std::string norm = normalize_sentence(s.text);
    if (!norm.empty()) ++counts[norm];
  }
  std::vector<Template> entries;
  for (auto& [text, count] : ranked(counts, min_template_freq)) {
    Template t;
    t.text = std::move(text);
    t.frequency = count;
    entries.push_back(std::move(t));
  }
  if (entries.empty()) warn("template database is empty (no abnormal sentence reaches min_template_freq)");
  return TemplateDb(std::move(entries));
}

TemplateDb mine_templates(std::span<const RawRecord> corpus, const AbnormalityVocab& abnormalities,
                          int min_template_freq, TokenizeMode mode) {
  std::vector<FlaggedSentence> flagged;
  for (const auto& record : corpus) {
    for (const auto& s : record.sentences) {
      const bool abnormal = s.abnormal.has_value() ? *s.abnormal : is_abnormal(s.text, abnormalities, mode);
      flagged.push_back({s.text, abnormal});
    }
  }
  return mine_templates(flagged, min_template_freq);
}

void align_sentences(std::vector<Sentence>& report, const TemplateDb& db) {
  for (auto& s : report) {
    s.template_index = db.lookup(s.raw_text);
    if (s.template_index > 0) {
      const Template& t = db.entry(s.template_index);
      s.raw_text = t.text;
      if (!t.token_ids.empty()) s.token_ids = t.token_ids;
    }
  }
}

// ------------------------------------------------------------------ Dataset

const std::vector<Sample>& Dataset::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  fail(ErrorKind::InvalidArgument, "unknown split '" + std::string(name) + "' (expected train, val or test)");
}

bool Dataset::operator==(const Dataset& other) const {
  return train == other.train && val == other.val && test == other.test && vocab == other.vocab &&
         abnormalities == other.abnormalities && templates == other.templates && seed == other.seed &&
         options.min_token_freq == other.options.min_token_freq &&
         options.min_tag_freq == other.options.min_tag_freq &&
         options.min_template_freq == other.options.min_template_freq &&
         options.max_words == other.options.max_words && options.mode == other.options.mode;
}

Sample encode_record(const RawRecord& record, const Vocabulary& vocab, const AbnormalityVocab& abnormalities,
                     const TemplateDb& db, const PrepareOptions& options) {
  Sample sample;
  sample.image_id = record.image_id;
  sample.image = record.image;
  sample.labels = abnormalities.encode_labels(record.tags);
  for (const auto& raw : record.sentences) {
    Sentence s;
    s.raw_text = raw.text;
    s.token_ids = vocab.encode(tokenize(raw.text, options.mode));
    if (s.token_ids.empty()) continue;
    if (s.token_ids.size() > options.max_words) s.token_ids.resize(options.max_words);
    sample.report.push_back(std::move(s));
  }
  require(!sample.report.empty(), ErrorKind::InvalidArgument, "record '" + record.image_id + "' has an empty report");
  align_sentences(sample.report, db);
  return sample;
}

Dataset prepare(const RawCorpus& raw, const PrepareOptions& options) {
  require(!raw.train.empty(), ErrorKind::InvalidArgument, "prepare: training split is empty");
  Dataset ds;
  ds.options = options;
  ds.seed = raw.seed;
  ds.vocab = build_vocabulary(raw.train, options.min_token_freq, options.mode);
  ds.abnormalities = build_abnormality_vocab(raw.train, options.min_tag_freq);
  ds.templates = mine_templates(raw.train, ds.abnormalities, options.min_template_freq, options.mode);
  ds.templates.encode(ds.vocab, options.mode, options.max_words);
  auto encode_split = [&](const std::vector<RawRecord>& records) {
    std::vector<Sample> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(encode_record(r, ds.vocab, ds.abnormalities, ds.templates, options));
    return out;
  };
  ds.train = encode_split(raw.train);
  ds.val = encode_split(raw.val);
  ds.test = encode_split(raw.test);
  return ds;
}

void validate(const Dataset& dataset) {
  const std::size_t m = dataset.abnormalities.size();
  const std::size_t n = dataset.templates.size();
  for (const auto* split : {&dataset.train, &dataset.val, &dataset.test}) {
    for (const auto& sample : *split) {
      const std::string where = "sample '" + sample.image_id + "'";
      require(sample.labels.size() == m, ErrorKind::Format,
              where + " has " + std::to_string(sample.labels.size()) + " labels, expected " + std::to_string(m));
      for (int y : sample.labels) require(y == 0 || y == 1, ErrorKind::Format, where + " has a non-binary label");
      require(!sample.report.empty(), ErrorKind::Format, where + " has an empty report");
      for (const auto& s : sample.report) {
        require(s.token_ids.size() <= dataset.options.max_words, ErrorKind::Format, where + " exceeds max_words");
        for (int id : s.token_ids) {
          require(id >= 0 && static_cast<std::size_t>(id) < dataset.vocab.size(), ErrorKind::Format,
                  where + " has token id " + std::to_string(id) + " outside the vocabulary");
        }
        require(s.template_index >= 0 && static_cast<std::size_t>(s.template_index) <= n, ErrorKind::Format,
                where + " has template index " + std::to_string(s.template_index) + " outside [0, N]");
        if (s.template_index > 0) {
          require(s.raw_text == dataset.templates.entry(s.template_index).text, ErrorKind::Format,
                  where + " template sentence text differs from its database entry");
        }
      }
    }
  }
}

}  // namespace relpara::corpus
