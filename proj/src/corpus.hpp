#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace relpara::corpus {

enum class TokenizeMode { Whitespace, Char };

TokenizeMode parse_tokenize_mode(std::string_view name);
std::string_view to_string(TokenizeMode mode);

// Lower-cases ASCII letters. Whitespace mode splits on whitespace and emits
// every ASCII punctuation character as its own token; char mode emits one
// token per non-space code point.
std::vector<std::string> tokenize(std::string_view text, TokenizeMode mode = TokenizeMode::Whitespace);

// Lower-case, collapse whitespace runs, trim, drop a trailing period.
std::string normalize_sentence(std::string_view text);

// Splits free report text on sentence-final punctuation.
std::vector<std::string> split_sentences(std::string_view text);

struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;  // height x width x channels, row-major

  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

struct Sentence {
  std::vector<int> token_ids;
  int template_index = 0;  // 0 = written by the word decoder, k >= 1 = template k
  std::string raw_text;
  bool operator==(const Sentence&) const = default;
};

struct Sample {
  std::string image_id;
  Image image;
  std::vector<int> labels;  // binary, one per abnormality
  std::vector<Sentence> report;
  bool operator==(const Sample&) const = default;
};

struct RawSentence {
  std::string text;
  std::optional<bool> abnormal;  // explicit annotation overrides keyword matching
  bool operator==(const RawSentence&) const = default;
};

struct RawRecord {
  std::string image_id;
  Image image;
  std::vector<std::string> tags;
  std::vector<RawSentence> sentences;
  bool operator==(const RawRecord&) const = default;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kStart = 1;
  static constexpr int kEnd = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocabulary();
  // tokens excludes the reserved entries; ids are assigned in order after them.
  explicit Vocabulary(std::vector<std::string> tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  bool contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }
  std::size_t size() const { return tokens_.size(); }
  std::size_t retained() const { return tokens_.size() - kReserved; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::string decode(std::span<const int> ids) const;

  std::string serialize() const;  // token<TAB>id per line
  static Vocabulary parse(std::string_view text);
  std::uint64_t content_hash() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

Vocabulary build_vocabulary(std::span<const std::vector<std::string>> tokenized_sentences, int min_token_freq);
Vocabulary build_vocabulary(std::span<const RawRecord> corpus, int min_token_freq,
                            TokenizeMode mode = TokenizeMode::Whitespace);

class AbnormalityVocab {
 public:
  AbnormalityVocab() = default;
  explicit AbnormalityVocab(std::vector<std::string> terms);

  std::optional<int> index(std::string_view term) const;
  const std::string& term(int index) const { return terms_[static_cast<std::size_t>(index)]; }
  std::size_t size() const { return terms_.size(); }
  const std::vector<std::string>& terms() const { return terms_; }

  std::vector<int> encode_labels(std::span<const std::string> tags) const;

  std::string serialize() const;  // term<TAB>index per line
  static AbnormalityVocab parse(std::string_view text);
  std::uint64_t content_hash() const;

  bool operator==(const AbnormalityVocab& other) const { return terms_ == other.terms_; }

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, int> index_;
};

AbnormalityVocab build_abnormality_vocab(std::span<const RawRecord> corpus, int min_tag_freq);

struct Template {
  std::string text;  // normalized
  std::vector<int> token_ids;
  int frequency = 0;
  bool operator==(const Template&) const = default;
};

class TemplateDb {
 public:
  TemplateDb() = default;
  explicit TemplateDb(std::vector<Template> entries);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  // 1-based; index 0 is the "write" decision and has no entry.
  const Template& entry(int index) const;
  const std::vector<Template>& entries() const { return entries_; }
  // 1-based index of the normalized text, or 0.
  int lookup(std::string_view text) const;

  void encode(const Vocabulary& vocab, TokenizeMode mode, std::size_t max_words);

  std::string serialize() const;  // index<TAB>frequency<TAB>text per line
  static TemplateDb parse(std::string_view text);
  std::uint64_t content_hash() const;

  bool operator==(const TemplateDb& other) const { return entries_ == other.entries_; }

 private:
  std::vector<Template> entries_;
  std::unordered_map<std::string, int> index_;
};

// Keyword fallback: abnormal iff some abnormality term occurs as a contiguous
// token run inside the sentence.
bool is_abnormal(std::string_view sentence, const AbnormalityVocab& abnormalities,
                 TokenizeMode mode = TokenizeMode::Whitespace);

struct FlaggedSentence {
  std::string text;
  bool abnormal = false;
};

TemplateDb mine_templates(std::span<const FlaggedSentence> sentences, int min_template_freq);
TemplateDb mine_templates(std::span<const RawRecord> corpus, const AbnormalityVocab& abnormalities,
                          int min_template_freq, TokenizeMode mode = TokenizeMode::Whitespace);

void align_sentences(std::vector<Sentence>& report, const TemplateDb& db);

struct PrepareOptions {
  int min_token_freq = 3;
  int min_tag_freq = 31;
  int min_template_freq = 3;
  std::size_t max_words = 15;
  TokenizeMode mode = TokenizeMode::Whitespace;
};

struct RawCorpus {
  std::vector<RawRecord> train;
  std::vector<RawRecord> val;
  std::vector<RawRecord> test;
  std::uint64_t seed = 0;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
  Vocabulary vocab;
  AbnormalityVocab abnormalities;
  TemplateDb templates;
  PrepareOptions options;
  std::uint64_t seed = 0;

  const std::vector<Sample>& split(std::string_view name) const;
  bool operator==(const Dataset& other) const;
};

// Builds vocabularies and the template database from the training split, then
// encodes and aligns every split.
Dataset prepare(const RawCorpus& raw, const PrepareOptions& options);

Sample encode_record(const RawRecord& record, const Vocabulary& vocab, const AbnormalityVocab& abnormalities,
                     const TemplateDb& db, const PrepareOptions& options);

// Checks the per-sample invariants against the dataset's artifacts.
void validate(const Dataset& dataset);

}  // namespace relpara::corpus
