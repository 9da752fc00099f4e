#include "sekd/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "sekd/error.hpp"

namespace sekd {
namespace {

template <typename Word>
void append_le(std::string &out, Word w) {
  for (std::size_t i = 0; i < sizeof(Word); ++i) {
    out.push_back(static_cast<char>((w >> (8 * i)) & 0xff));
  }
}

template <typename Word>
Word read_le(const unsigned char *p) {
  Word w = 0;
  for (std::size_t i = 0; i < sizeof(Word); ++i) {
    w |= static_cast<Word>(p[i]) << (8 * i);
  }
  return w;
}

template <typename T>
void append_values(std::string &out, const AlignedVec<T> &values) {
  for (T v : values) {
    if constexpr (sizeof(T) == 4) {
      append_le(out, std::bit_cast<std::uint32_t>(v));
    } else {
      append_le(out, std::bit_cast<std::uint64_t>(v));
    }
  }
}

} // namespace

nlohmann::json to_json(const ModelConfig &c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},
          {"n_layers", c.n_layers},     {"n_heads", c.n_heads},
          {"d_ff", c.d_ff},             {"max_seq_len", c.max_seq_len},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json &j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

template <typename T>
void save_checkpoint(const ModelParams<T> &params, const std::filesystem::path &dir,
                     const nlohmann::json &extra) {
  std::filesystem::create_directories(dir);
  const auto names = params.names();
  const auto tensors = params.tensors();
  std::map<std::string, const Tensor<T> *> sorted;
  for (std::size_t i = 0; i < names.size(); ++i) {
    sorted.emplace(names[i], tensors[i]);
  }

  std::string blob;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto &[name, t] : sorted) {
    entries.push_back({{"name", name},
                       {"shape", t->shape},
                       {"offset", blob.size()},
                       {"count", t->size()}});
    append_values(blob, t->data);
  }
  nlohmann::json manifest = {{"format", "sekd-checkpoint-v1"},
                             {"precision", sizeof(T) == 4 ? "f32" : "f64"},
                             {"byte_order", "little"},
                             {"blob", kBlobFile},
                             {"blob_bytes", blob.size()},
                             {"config", to_json(params.config)},
                             {"seed", params.config.seed},
                             {"params", entries},
                             {"metadata", extra}};

  std::ofstream bin(dir / kBlobFile, std::ios::binary | std::ios::trunc);
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  std::ofstream man(dir / kManifestFile, std::ios::trunc);
  man << manifest.dump(2) << "\n";
  if (!bin || !man) {
    throw IoError("failed to write checkpoint to " + dir.string());
  }
}

template <typename T>
ModelParams<T> load_checkpoint(const std::filesystem::path &dir) {
  std::ifstream man(dir / kManifestFile);
  if (!man) {
    throw IoError("missing checkpoint manifest: " + (dir / kManifestFile).string());
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(man);
  } catch (const nlohmann::json::exception &e) {
    throw IoError("malformed checkpoint manifest " + (dir / kManifestFile).string() + ": " +
                  e.what());
  }
  const std::string precision = manifest.at("precision").get<std::string>();
  const std::size_t width = precision == "f32" ? 4 : precision == "f64" ? 8 : 0;
  if (width == 0) {
    throw IoError("unsupported checkpoint precision " + precision);
  }
  std::ifstream bin(dir / manifest.value("blob", std::string(kBlobFile)), std::ios::binary);
  if (!bin) {
    throw IoError("missing checkpoint blob in " + dir.string());
  }
  const std::string blob((std::istreambuf_iterator<char>(bin)),
                         std::istreambuf_iterator<char>());

  ModelParams<T> params = ModelParams<T>::zeros(model_config_from_json(manifest.at("config")));
  const auto names = params.names();
  const auto tensors = params.tensors();
  std::map<std::string, Tensor<T> *> by_name;
  for (std::size_t i = 0; i < names.size(); ++i) {
    by_name.emplace(names[i], tensors[i]);
  }
  std::size_t seen = 0;
  for (const auto &e : manifest.at("params")) {
    const auto it = by_name.find(e.at("name").get<std::string>());
    if (it == by_name.end()) {
      throw IoError("checkpoint has unknown parameter " + e.at("name").get<std::string>());
    }
    Tensor<T> &t = *it->second;
    if (e.at("shape").get<std::vector<std::size_t>>() != t.shape) {
      throw IoError("checkpoint shape mismatch for " + it->first);
    }
    const auto offset = e.at("offset").get<std::size_t>();
    if (offset + t.size() * width > blob.size()) {
      throw IoError("checkpoint blob truncated at " + it->first);
    }
    const auto *p = reinterpret_cast<const unsigned char *>(blob.data()) + offset;
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (width == 4) {
        t.data[k] = static_cast<T>(std::bit_cast<float>(read_le<std::uint32_t>(p + 4 * k)));
      } else {
        t.data[k] = static_cast<T>(std::bit_cast<double>(read_le<std::uint64_t>(p + 8 * k)));
      }
    }
    ++seen;
  }
  if (seen != names.size()) {
    throw IoError("checkpoint is missing parameters");
  }
  return params;
}

template void save_checkpoint<float>(const ModelParams<float> &, const std::filesystem::path &,
                                     const nlohmann::json &);
template void save_checkpoint<double>(const ModelParams<double> &,
                                      const std::filesystem::path &, const nlohmann::json &);
template ModelParams<float> load_checkpoint<float>(const std::filesystem::path &);
template ModelParams<double> load_checkpoint<double>(const std::filesystem::path &);

} // namespace sekd
