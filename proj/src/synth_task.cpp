#include "sekd/synth_task.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "sekd/error.hpp"
#include "sekd/rng.hpp"

namespace sekd::task {
namespace {

constexpr std::uint64_t kMappingStream = 0x6d6170;
constexpr std::uint64_t kShuffleStream = 0x73687566;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

bool is_content(int token, int vocab_size) {
  return token >= kFirstContent && token < vocab_size;
}

Split generate_split(const TaskSpec &spec, const Mapping &mapping, const std::string &name,
                     std::size_t size, std::uint64_t stream) {
  std::mt19937_64 gen(rng::derive(spec.seed, stream));
  const ZipfSampler zipf(spec.content_count(), spec.zipf_exponent);
  const auto span = static_cast<std::uint64_t>(spec.max_len - spec.min_len + 1);
  Split split{name, {}};
  split.examples.reserve(size);
  for (std::size_t n = 0; n < size; ++n) {
    const auto len = static_cast<std::size_t>(spec.min_len) +
                     static_cast<std::size_t>(rng::below(gen, span));
    std::vector<int> plain(len);
    for (int &t : plain) {
      t = zipf.sample(gen);
    }
    const bool forward = rng::uniform01(gen) < 0.5;
    std::vector<int> mapped = mapping.apply(plain);
    Example ex;
    if (forward) {
      ex.direction = kDirForward;
      ex.source = std::move(plain);
      ex.target = std::move(mapped);
    } else {
      ex.direction = kDirInverse;
      ex.source = std::move(mapped);
      ex.target = std::move(plain);
    }
    split.examples.push_back(std::move(ex));
  }
  return split;
}

std::vector<int> parse_ids(const std::string &field, const std::filesystem::path &path,
                           std::size_t line_no) {
  std::vector<int> out;
  std::istringstream is(field);
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(tok, &used);
      if (used != tok.size()) {
        throw std::invalid_argument(tok);
      }
      out.push_back(v);
    } catch (const std::exception &) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad token '" + tok +
                    "'");
    }
  }
  return out;
}

} // namespace

void TaskSpec::validate() const {
  if (vocab_size < 8) {
    throw InvalidInput("vocab_size must be at least 8");
  }
  if (!(zipf_exponent > 0.0) || !std::isfinite(zipf_exponent)) {
    throw InvalidInput("zipf_exponent must be positive");
  }
  if (min_len < 1 || min_len > max_len) {
    throw InvalidInput("min_len must satisfy 1 <= min_len <= max_len");
  }
  if (train_size == 0 || valid_size == 0 || test_size == 0) {
    throw InvalidInput("train_size, valid_size and test_size must be positive");
  }
}

std::string TaskSpec::canonical() const {
  char zipf[32];
  std::snprintf(zipf, sizeof(zipf), "%.17g", zipf_exponent);
  std::ostringstream os;
  os << "vocab_size=" << vocab_size << ";zipf_exponent=" << zipf << ";min_len=" << min_len
     << ";max_len=" << max_len << ";train_size=" << train_size
     << ";valid_size=" << valid_size << ";test_size=" << test_size << ";seed=" << seed
     << ";mapping_seed=" << mapping_seed;
  return os.str();
}

std::uint64_t TaskSpec::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Mapping Mapping::build(const TaskSpec &spec) {
  spec.validate();
  std::vector<int> content(static_cast<std::size_t>(spec.content_count()));
  std::iota(content.begin(), content.end(), kFirstContent);
  std::vector<int> image = content;
  std::mt19937_64 gen(rng::derive(spec.mapping_seed, kMappingStream));
  rng::shuffle(image, gen);

  Mapping m;
  m.forward_.resize(static_cast<std::size_t>(spec.vocab_size));
  m.inverse_.resize(static_cast<std::size_t>(spec.vocab_size));
  std::iota(m.forward_.begin(), m.forward_.end(), 0);
  std::iota(m.inverse_.begin(), m.inverse_.end(), 0);
  for (std::size_t i = 0; i < content.size(); ++i) {
    m.forward_[static_cast<std::size_t>(content[i])] = image[i];
    m.inverse_[static_cast<std::size_t>(image[i])] = content[i];
  }
  return m;
}

int Mapping::substitute(int token) const {
  if (!is_content(token, static_cast<int>(forward_.size()))) {
    throw InvalidInput("mapping: token " + std::to_string(token) + " is not content");
  }
  return forward_[static_cast<std::size_t>(token)];
}

std::vector<int> swap_pairs(std::span<const int> tokens) {
  std::vector<int> out(tokens.begin(), tokens.end());
  for (std::size_t i = 0; i + 1 < out.size(); i += 2) {
    if (out[i] % 2 == 0 || out[i + 1] % 2 == 0) {
      std::swap(out[i], out[i + 1]);
    }
  }
  return out;
}

std::vector<int> Mapping::apply(std::span<const int> source) const {
  std::vector<int> sub;
  sub.reserve(source.size());
  for (int t : source) {
    sub.push_back(substitute(t));
  }
  return swap_pairs(sub);
}

std::vector<int> Mapping::invert(std::span<const int> target) const {
  std::vector<int> out = swap_pairs(target);
  for (int &t : out) {
    if (!is_content(t, static_cast<int>(inverse_.size()))) {
      throw InvalidInput("mapping: token " + std::to_string(t) + " is not content");
    }
    t = inverse_[static_cast<std::size_t>(t)];
  }
  return out;
}

std::vector<int> Example::prompt() const {
  std::vector<int> out;
  out.reserve(source.size() + 3);
  out.push_back(kBos);
  out.push_back(direction);
  out.insert(out.end(), source.begin(), source.end());
  out.push_back(kSep);
  return out;
}

std::vector<int> Example::sequence() const {
  std::vector<int> out = prompt();
  out.insert(out.end(), target.begin(), target.end());
  out.push_back(kEos);
  return out;
}

const Split &Corpus::split(const std::string &name) const {
  if (name == "train") {
    return train;
  }
  if (name == "valid") {
    return valid;
  }
  if (name == "test") {
    return test;
  }
  throw InvalidInput("unknown split '" + name + "'");
}

Corpus generate_corpus(const TaskSpec &spec) {
  spec.validate();
  const Mapping mapping = Mapping::build(spec);
  Corpus c;
  c.spec = spec;
  c.train = generate_split(spec, mapping, "train", spec.train_size, 1);
  c.valid = generate_split(spec, mapping, "valid", spec.valid_size, 2);
  c.test = generate_split(spec, mapping, "test", spec.test_size, 3);
  return c;
}

ZipfSampler::ZipfSampler(int content_count, double exponent) {
  if (content_count < 1) {
    throw InvalidInput("zipf: empty content vocabulary");
  }
  cdf_.resize(static_cast<std::size_t>(content_count));
  double total = 0.0;
  for (int r = 1; r <= content_count; ++r) {
    total += std::pow(static_cast<double>(r), -exponent);
    cdf_[static_cast<std::size_t>(r - 1)] = total;
  }
  for (double &c : cdf_) {
    c /= total;
  }
}

int ZipfSampler::sample(std::mt19937_64 &gen) const {
  const double u = rng::uniform01(gen);
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const auto rank0 = std::min<std::ptrdiff_t>(it - cdf_.begin(),
                                               static_cast<std::ptrdiff_t>(cdf_.size()) - 1);
  return kFirstContent + static_cast<int>(rank0);
}

double ZipfSampler::probability(int rank) const {
  const auto i = static_cast<std::size_t>(rank - 1);
  return i == 0 ? cdf_[0] : cdf_.at(i) - cdf_[i - 1];
}

std::string serialize_split(const Split &split, const TaskSpec &spec) {
  std::ostringstream os;
  os << "# sekd-corpus v1 split=" << split.name << " fingerprint=" << hex64(spec.fingerprint())
     << " spec=" << spec.canonical() << "\n";
  for (const Example &ex : split.examples) {
    os << ex.direction;
    for (int t : ex.source) {
      os << ' ' << t;
    }
    os << '\t';
    for (std::size_t i = 0; i < ex.target.size(); ++i) {
      os << (i == 0 ? "" : " ") << ex.target[i];
    }
    os << '\n';
  }
  return os.str();
}

void write_split(const Split &split, const TaskSpec &spec, const std::filesystem::path &path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << serialize_split(split, spec);
  if (!out) {
    throw IoError("failed to write corpus file " + path.string());
  }
}

Split read_split(const std::filesystem::path &path, const TaskSpec *expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("missing corpus file: " + path.string());
  }
  std::string header;
  std::getline(in, header);
  const std::string prefix = "# sekd-corpus v1 split=";
  if (header.rfind(prefix, 0) != 0) {
    throw IoError(path.string() + ": missing corpus header");
  }
  Split split;
  {
    std::istringstream hs(header.substr(prefix.size()));
    hs >> split.name;
    std::string fp;
    hs >> fp;
    if (expected != nullptr && fp != "fingerprint=" + hex64(expected->fingerprint())) {
      throw IoError(path.string() + ": corpus fingerprint does not match the task spec");
    }
  }
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": missing tab");
    }
    std::vector<int> src = parse_ids(line.substr(0, tab), path, line_no);
    if (src.empty()) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": missing direction");
    }
    Example ex;
    ex.direction = src.front();
    ex.source.assign(src.begin() + 1, src.end());
    ex.target = parse_ids(line.substr(tab + 1), path, line_no);
    split.examples.push_back(std::move(ex));
  }
  return split;
}

BatchIterator::BatchIterator(const Split &split, std::size_t batch_size, std::uint64_t seed,
                             std::uint64_t epoch)
    : split_(&split), batch_size_(batch_size) {
  if (batch_size == 0) {
    throw InvalidInput("batch_size must be positive");
  }
  if (split.examples.empty()) {
    throw InvalidInput("cannot iterate an empty split");
  }
  order_.resize(split.examples.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::mt19937_64 gen(rng::derive(rng::derive(seed, kShuffleStream), epoch));
  rng::shuffle(order_, gen);
}

std::size_t BatchIterator::batch_count() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

bool BatchIterator::next(TokenBatch &out) {
  if (cursor_ >= order_.size()) {
    return false;
  }
  const std::size_t stop = std::min(order_.size(), cursor_ + batch_size_);
  out = make_training_batch(*split_, std::span<const std::size_t>(order_).subspan(
                                         cursor_, stop - cursor_));
  cursor_ = stop;
  return true;
}

TokenBatch make_training_batch(const Split &split, std::span<const std::size_t> indices) {
  TokenBatch out;
  out.batch = indices.size();
  std::vector<std::vector<int>> seqs;
  seqs.reserve(indices.size());
  for (std::size_t idx : indices) {
    seqs.push_back(split.examples.at(idx).sequence());
    out.length = std::max(out.length, seqs.back().size());
  }
  out.token_ids.assign(out.batch * out.length, kPad);
  out.loss_mask.assign(out.batch * out.length, 0);
  for (std::size_t b = 0; b < out.batch; ++b) {
    const Example &ex = split.examples[indices[b]];
    const std::size_t prompt_len = ex.source.size() + 3;
    const auto &seq = seqs[b];
    for (std::size_t i = 0; i < seq.size(); ++i) {
      out.token_ids[b * out.length + i] = seq[i];
      out.loss_mask[b * out.length + i] = i >= prompt_len ? 1 : 0;
    }
    out.lengths.push_back(seq.size());
    out.example_index.push_back(indices[b]);
  }
  return out;
}

double unigram_baseline_accuracy(const Split &train, const Split &test, int vocab_size) {
  // counts[(direction, source token)][target token at the same position]
  std::map<std::pair<int, int>, std::vector<std::size_t>> counts;
  for (const Example &ex : train.examples) {
    const std::size_t n = std::min(ex.source.size(), ex.target.size());
    for (std::size_t i = 0; i < n; ++i) {
      auto &row = counts[{ex.direction, ex.source[i]}];
      row.resize(static_cast<std::size_t>(vocab_size), 0);
      row[static_cast<std::size_t>(ex.target[i])] += 1;
    }
  }
  std::map<std::pair<int, int>, int> best;
  for (const auto &[key, row] : counts) {
    best[key] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const Example &ex : test.examples) {
    for (std::size_t i = 0; i < ex.target.size(); ++i) {
      ++total;
      if (i < ex.source.size()) {
        const auto it = best.find({ex.direction, ex.source[i]});
        if (it != best.end() && it->second == ex.target[i]) {
          ++correct;
        }
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

} // namespace sekd::task
