#include "checkpoint.hpp"

#include <bit>
#include <cstring>

#include "util.hpp"

namespace relpara::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace {
constexpr std::string_view kMagic = "RPNCKPT1";
constexpr int kFormatVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t get_u64(std::string_view bytes, std::size_t offset) {
  std::uint64_t v = 0;
  std::memcpy(&v, bytes.data() + offset, 8);
  return v;
}
}  // namespace

ArtifactHashes ArtifactHashes::of(const corpus::Dataset& d) {
  return {d.vocab.content_hash(), d.abnormalities.content_hash(), d.templates.content_hash()};
}

std::string serialize(const model::Model& model, const ArtifactHashes& hashes, const nlohmann::json& train_config) {
  nlohmann::ordered_json header;
  header["format_version"] = kFormatVersion;
  header["model"] = model::to_json(model.config());
  header["hashes"] = {{"vocab", hex64(hashes.vocab)},
                      {"abnormalities", hex64(hashes.abnormalities)},
                      {"templates", hex64(hashes.templates)}};
  header["train_config"] = train_config;
  auto index = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const ad::Parameter* p : model.parameters()) {
    index.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}, {"offset", offset}});
    offset += static_cast<std::size_t>(p->size());
  }
  header["tensors"] = std::move(index);
  header["values"] = offset;
  const std::string h = header.dump();

  std::string out(kMagic);
  put_u64(out, h.size());
  out += h;
  for (const ad::Parameter* p : model.parameters()) {
    // Eigen storage is column-major; the index records rows/cols so readers can rebuild it.
    out.append(reinterpret_cast<const char*>(p->value.data()), static_cast<std::size_t>(p->size()) * sizeof(double));
  }
  put_u64(out, fnv1a(out));
  return out;
}

Checkpoint parse(std::string_view bytes) {
  require(bytes.size() >= kMagic.size() + 16 && bytes.substr(0, kMagic.size()) == kMagic, ErrorKind::Format,
          "checkpoint: bad magic (not a checkpoint file)");
  const std::size_t body = bytes.size() - 8;
  require(get_u64(bytes, body) == fnv1a(bytes.substr(0, body)), ErrorKind::Format,
          "checkpoint: checksum mismatch (file is corrupted or truncated)");
  const std::uint64_t hlen = get_u64(bytes, kMagic.size());
  const std::size_t hstart = kMagic.size() + 8;
  require(hlen <= body - hstart, ErrorKind::Format, "checkpoint: header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(hstart, hlen));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("checkpoint header: ") + e.what());
  }
  const int version = header.value("format_version", -1);
  require(version == kFormatVersion, ErrorKind::SchemaVersion,
          "checkpoint: format version " + std::to_string(version) + ", this build reads " +
              std::to_string(kFormatVersion));

  Checkpoint ck;
  try {
    ck.model = std::make_unique<model::Model>(model::model_config_from_json(header.at("model")));
    auto parse_hash = [&](const char* key) {
      return static_cast<std::uint64_t>(std::stoull(header.at("hashes").at(key).get<std::string>(), nullptr, 16));
    };
    ck.hashes.vocab = parse_hash("vocab");
    ck.hashes.abnormalities = parse_hash("abnormalities");
    ck.hashes.templates = parse_hash("templates");
    ck.train_config = header.value("train_config", nlohmann::json::object());
    const auto& index = header.at("tensors");
    auto params = ck.model->parameters();
    require(index.size() == params.size(), ErrorKind::Format,
            "checkpoint: " + std::to_string(index.size()) + " tensors, model expects " + std::to_string(params.size()));
    const std::size_t payload = hstart + hlen;
    const std::size_t values = header.at("values").get<std::size_t>();
    require(payload + values * sizeof(double) == body, ErrorKind::Format, "checkpoint: payload size mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto& t = index[k];
      ad::Parameter& p = *params[k];
      require(t.at("name").get<std::string>() == p.name && t.at("rows").get<Eigen::Index>() == p.value.rows() &&
                  t.at("cols").get<Eigen::Index>() == p.value.cols(),
              ErrorKind::Format, "checkpoint: tensor " + std::to_string(k) + " does not match parameter " + p.name);
      const std::size_t offset = t.at("offset").get<std::size_t>();
      require(offset + static_cast<std::size_t>(p.size()) <= values, ErrorKind::Format,
              "checkpoint: tensor " + p.name + " out of range");
      std::memcpy(p.value.data(), bytes.data() + payload + offset * sizeof(double),
                  static_cast<std::size_t>(p.size()) * sizeof(double));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("checkpoint header: ") + e.what());
  } catch (const std::logic_error& e) {
    fail(ErrorKind::Format, std::string("checkpoint header: ") + e.what());
  }
  return ck;
}

void save(const std::filesystem::path& path, const model::Model& model, const ArtifactHashes& hashes,
          const nlohmann::json& train_config) {
  write_file(path, serialize(model, hashes, train_config));
}

Checkpoint load(const std::filesystem::path& path) { return parse(read_file(path)); }

void check_compatible(const Checkpoint& ck, const corpus::Dataset& dataset) {
  const ArtifactHashes have = ArtifactHashes::of(dataset);
  auto check = [](std::uint64_t want, std::uint64_t got, const char* what) {
    require(want == got, ErrorKind::HashMismatch,
            std::string("checkpoint refused: ") + what + " hash " + hex64(want) + " does not match dataset " +
                hex64(got));
  };
  check(ck.hashes.vocab, have.vocab, "vocabulary");
  check(ck.hashes.abnormalities, have.abnormalities, "abnormality vocabulary");
  check(ck.hashes.templates, have.templates, "template database");
}

}  // namespace relpara::checkpoint
