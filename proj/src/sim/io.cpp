#include "mdp/sim/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "json.hpp"
#include "mdp/errors.hpp"

namespace mdp::sim {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "mdp-toy-checkpoint";
constexpr int kCheckpointVersion = 1;

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

json layout_json(const VocabLayout& layout) {
  return {{"num_classes", layout.num_classes},
          {"signal_per_class", layout.signal_per_class},
          {"filler", layout.filler},
          {"trigger_reserve", layout.trigger_reserve}};
}

VocabLayout layout_from(const json& j) {
  VocabLayout layout;
  layout.num_classes = j.at("num_classes").get<int>();
  layout.signal_per_class = j.at("signal_per_class").get<int>();
  layout.filler = j.at("filler").get<int>();
  layout.trigger_reserve = j.at("trigger_reserve").get<int>();
  return layout;
}

json attack_json(const AttackSpec& spec) {
  return {{"kind", to_string(spec.kind)},
          {"triggers", spec.triggers},
          {"target", spec.target},
          {"poisoning_rate", spec.poisoning_rate},
          {"lambda", spec.poison_weight}};
}

AttackSpec attack_from(const json& j) {
  AttackSpec spec;
  spec.kind = parse_attack_kind(j.at("kind").get<std::string>());
  spec.triggers = j.at("triggers").get<std::vector<TokenId>>();
  spec.target = j.at("target").get<ClassId>();
  spec.poisoning_rate = j.at("poisoning_rate").get<double>();
  spec.poison_weight = j.at("lambda").get<double>();
  return spec;
}

struct ArrayRef {
  const char* name;
  std::vector<double>* values;
  std::size_t rows;
  std::size_t cols;
};

std::vector<ArrayRef> arrays_of(ToyModel& model) {
  auto& p = model.params();
  const auto dim = static_cast<std::size_t>(model.dim());
  return {{"embeddings", &p.embeddings, static_cast<std::size_t>(model.vocab_size()), dim},
          {"prompt", &p.prompt, 1, dim},
          {"head", &p.head, model.num_labels(), dim},
          {"bias", &p.bias, 1, model.num_labels()}};
}

void write_array(std::ostream& out, const ArrayRef& a) {
  out << a.name << ' ' << a.rows << ' ' << a.cols << '\n';
  for (std::size_t r = 0; r < a.rows; ++r) {
    for (std::size_t c = 0; c < a.cols; ++c) {
      if (c > 0) out << ' ';
      out << hexfloat((*a.values)[r * a.cols + c]);
    }
    out << '\n';
  }
}

void read_array(std::istream& in, const ArrayRef& a) {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  if (!(in >> name >> rows >> cols) || name != a.name || rows != a.rows || cols != a.cols) {
    throw IoError(std::string("checkpoint array '") + a.name + "' missing or misshapen");
  }
  for (double& v : *a.values) {
    std::string token;
    if (!(in >> token)) throw IoError(std::string("checkpoint array '") + a.name + "' truncated");
    char* end = nullptr;
    errno = 0;
    v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size() || errno == ERANGE) {
      throw IoError("bad number '" + token + "' in checkpoint");
    }
  }
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  const ToyModel& m = checkpoint.model;
  json header = {{"format", kCheckpointFormat},
                 {"version", kCheckpointVersion},
                 {"vocab_size", m.vocab_size()},
                 {"dim", m.dim()},
                 {"label_tokens", m.labels().label_tokens()},
                 {"token_class", m.labels().token_class()},
                 {"layout", layout_json(checkpoint.layout)},
                 {"seed", checkpoint.seed},
                 {"attack", checkpoint.attack ? attack_json(*checkpoint.attack) : json(nullptr)}};
  out << header.dump() << '\n';
  ToyModel copy = m;
  for (const ArrayRef& a : arrays_of(copy)) write_array(out, a);
  if (!out) throw IoError("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty checkpoint");
  const json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != kCheckpointFormat) {
    throw IoError("not a toy-model checkpoint");
  }
  if (header.value("version", -1) != kCheckpointVersion) throw IoError("unsupported checkpoint version");
  try {
    Checkpoint ck;
    ck.layout = layout_from(header.at("layout"));
    ck.seed = header.at("seed").get<std::uint64_t>();
    if (!header.at("attack").is_null()) ck.attack = attack_from(header.at("attack"));
    oracle::VocabularyDescriptor labels(header.at("label_tokens").get<std::vector<std::string>>(),
                                        header.at("token_class").get<std::vector<ClassId>>());
    ck.model = ToyModel(header.at("vocab_size").get<int>(), header.at("dim").get<int>(), std::move(labels));
    for (const ArrayRef& a : arrays_of(ck.model)) read_array(in, a);
    return ck;
  } catch (const json::exception& e) {
    throw IoError(std::string("bad checkpoint header: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  auto out = open_output(path);
  write_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint(const std::string& path) {
  auto in = open_input(path);
  return read_checkpoint(in);
}

void write_dataset(std::ostream& out, std::span<const Sample> samples) {
  for (const Sample& s : samples) {
    json record = {{"id", s.id},
                   {"tokens", s.tokens},
                   {"label", s.label ? json(*s.label) : json(nullptr)},
                   {"is_poisoned", s.is_poisoned}};
    out << record.dump() << '\n';
  }
  if (!out) throw IoError("dataset write failed");
}

std::vector<Sample> read_dataset(std::istream& in) {
  std::vector<Sample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json record = json::parse(line, nullptr, false);
    try {
      if (record.is_discarded()) throw IoError("not JSON");
      Sample s;
      s.id = record.at("id").get<oracle::SampleId>();
      s.tokens = record.at("tokens").get<std::vector<TokenId>>();
      if (const auto& label = record.at("label"); !label.is_null()) s.label = label.get<ClassId>();
      s.is_poisoned = record.value("is_poisoned", false);
      samples.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw IoError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return samples;
}

void save_dataset(const std::string& path, std::span<const Sample> samples) {
  auto out = open_output(path);
  write_dataset(out, samples);
}

std::vector<Sample> load_dataset(const std::string& path) {
  auto in = open_input(path);
  return read_dataset(in);
}

}  // namespace mdp::sim
