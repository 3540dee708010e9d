#include "mdp/wire.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <istream>
#include <map>
#include <ostream>

#include "json.hpp"
#include "mdp/errors.hpp"

namespace mdp::oracle::wire {

using nlohmann::json;

namespace {

json parse_record(std::string_view line) {
  json record = json::parse(line.begin(), line.end(), nullptr, false);
  if (record.is_discarded() || !record.is_object()) {
    throw ProtocolError("malformed record: " + std::string(line.substr(0, 120)));
  }
  return record;
}

std::uint64_t read_id(const json& record) {
  const auto it = record.find("id");
  if (it == record.end() || !it->is_number_unsigned()) throw ProtocolError("record lacks a non-negative integer id");
  return it->get<std::uint64_t>();
}

}  // namespace

TokenCodec::TokenCodec(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!ids_.emplace(names_[i], static_cast<TokenId>(i)).second) {
      throw ParameterError("duplicate token surface form '" + names_[i] + "'");
    }
  }
}

const std::string& TokenCodec::encode(TokenId token) const {
  if (token < 0 || static_cast<std::size_t>(token) >= names_.size()) {
    throw VocabularyError("token id " + std::to_string(token) + " has no surface form");
  }
  return names_[static_cast<std::size_t>(token)];
}

TokenId TokenCodec::decode(std::string_view name) const {
  const auto it = ids_.find(std::string(name));
  if (it == ids_.end()) throw VocabularyError("unknown token '" + std::string(name) + "'");
  return it->second;
}

std::string encode_hello(const VocabularyDescriptor& vocab) {
  json record = {{"op", "hello"},
                 {"protocol", kProtocolName},
                 {"version", kProtocolVersion},
                 {"label_tokens", vocab.label_tokens()},
                 {"token_class", vocab.token_class()}};
  return record.dump();
}

VocabularyDescriptor decode_hello(std::string_view line) {
  const json record = parse_record(line);
  if (record.value("op", "") != "hello") throw ProtocolError("expected a hello record");
  if (record.value("protocol", "") != kProtocolName) throw ProtocolError("unknown protocol name");
  if (record.value("version", -1) != kProtocolVersion) {
    throw ProtocolError("unsupported protocol version " + record.value("version", json()).dump());
  }
  try {
    return VocabularyDescriptor(record.at("label_tokens").get<std::vector<std::string>>(),
                                record.at("token_class").get<std::vector<ClassId>>());
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("bad vocabulary in hello: ") + e.what());
  } catch (const ParameterError& e) {
    throw ProtocolError(std::string("bad vocabulary in hello: ") + e.what());
  }
}

std::string encode_request(std::uint64_t id, const Sample& sample, const TokenCodec& codec) {
  json tokens = json::array();
  json masked = json::array();
  for (std::size_t i = 0; i < sample.tokens.size(); ++i) {
    tokens.push_back(codec.encode(sample.tokens[i]));
    if (sample.tokens[i] == kMaskToken) masked.push_back(i);
  }
  json record = {{"id", id}, {"op", "query"}, {"tokens", std::move(tokens)}, {"masked_positions", std::move(masked)}};
  return record.dump();
}

Request decode_request(std::string_view line, const TokenCodec& codec) {
  const json record = parse_record(line);
  Request request;
  request.id = read_id(record);
  if (record.value("op", "") != "query") throw ProtocolError("unsupported op");
  const auto tokens = record.find("tokens");
  if (tokens == record.end() || !tokens->is_array()) throw ProtocolError("query lacks a tokens array");
  request.sample.id = request.id;
  for (const auto& t : *tokens) {
    if (!t.is_string()) throw ProtocolError("tokens must be strings");
    request.sample.tokens.push_back(codec.decode(t.get<std::string>()));
  }
  if (const auto masked = record.find("masked_positions"); masked != record.end()) {
    if (!masked->is_array()) throw ProtocolError("masked_positions must be an array");
    for (const auto& p : *masked) {
      if (!p.is_number_unsigned() || p.get<std::size_t>() >= request.sample.tokens.size()) {
        throw ProtocolError("masked position out of range");
      }
      request.sample.tokens[p.get<std::size_t>()] = kMaskToken;
    }
  }
  validate_sample(request.sample, true);
  return request;
}

std::string encode_response(std::uint64_t id, const stats::LabelDistribution& dist) {
  json record = {{"id", id}, {"probs", std::vector<double>(dist.probs().begin(), dist.probs().end())}};
  return record.dump();
}

std::string encode_error(std::optional<std::uint64_t> id, std::string_view kind, std::string_view message) {
  json record;
  record["id"] = id ? json(*id) : json(nullptr);
  record["error"] = {{"kind", kind}, {"message", message}};
  return record.dump();
}

Response decode_response(std::string_view line) {
  const json record = parse_record(line);
  Response response;
  response.id = read_id(record);
  if (const auto err = record.find("error"); err != record.end()) {
    response.error_kind = err->value("kind", "unknown");
    response.error_message = err->value("message", "");
    return response;
  }
  const auto probs = record.find("probs");
  if (probs == record.end() || !probs->is_array()) throw ProtocolError("response lacks probs");
  for (const auto& p : *probs) {
    if (!p.is_number()) throw ProtocolError("probs must be numbers");
    response.probs.push_back(p.get<double>());
  }
  return response;
}

stats::LabelDistribution accept_distribution(const std::vector<double>& probs, std::size_t expected_size) {
  if (probs.size() != expected_size) {
    throw ProtocolError("expected " + std::to_string(expected_size) + " probabilities, got " +
                        std::to_string(probs.size()));
  }
  double total = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) throw ProtocolError("probabilities must be finite and non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > kMassTolerance) {
    throw ProtocolError("probabilities sum to " + std::to_string(total));
  }
  // Mass already within the distribution's own tolerance passes through
  // untouched, so a remote simulator reproduces in-process results bit for bit.
  if (std::abs(total - 1.0) <= 1e-9) return stats::LabelDistribution(probs);
  std::vector<double> scaled(probs);
  for (double& p : scaled) p /= total;
  return stats::LabelDistribution(std::move(scaled));
}

std::size_t serve_oracle(const Oracle& oracle, const TokenCodec& codec, std::istream& in, std::ostream& out) {
  out << encode_hello(oracle.vocabulary()) << '\n' << std::flush;
  std::size_t answered = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::optional<std::uint64_t> id;
    try {
      const json probe = json::parse(line, nullptr, false);
      if (probe.is_object() && probe.contains("id") && probe["id"].is_number_unsigned()) {
        id = probe["id"].get<std::uint64_t>();
      }
      const Request request = decode_request(line, codec);
      out << encode_response(request.id, oracle.query(request.sample)) << '\n';
      ++answered;
    } catch (const VocabularyError& e) {
      out << encode_error(id, "vocabulary", e.what()) << '\n';
    } catch (const Error& e) {
      out << encode_error(id, "protocol", e.what()) << '\n';
    }
    out.flush();
  }
  return answered;
}

// ---- client ---------------------------------------------------------------

struct ProcessOracle::Channel {
  pid_t pid = -1;
  int to_child = -1;
  int from_child = -1;
  std::string buffer;

  void write_line(const std::string& line) {
    std::string data = line + '\n';
    const char* p = data.data();
    std::size_t left = data.size();
    while (left > 0) {
      const ssize_t n = ::write(to_child, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("oracle process write failed: ") + std::strerror(errno));
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    for (;;) {
      const auto nl = buffer.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer.substr(0, nl);
        buffer.erase(0, nl + 1);
        return line;
      }
      char chunk[4096];
      const ssize_t n = ::read(from_child, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("oracle process read failed: ") + std::strerror(errno));
      }
      if (n == 0) throw TransportError("oracle process closed its output");
      buffer.append(chunk, static_cast<std::size_t>(n));
    }
  }

  ~Channel() {
    if (to_child >= 0) ::close(to_child);
    if (from_child >= 0) ::close(from_child);
    if (pid > 0) {
      int status = 0;
      ::waitpid(pid, &status, 0);
    }
  }
};

ProcessOracle::ProcessOracle(const std::string& command, TokenCodec codec)
    : channel_(std::make_unique<Channel>()), codec_(std::move(codec)) {
  // A dead child must surface as a TransportError, not kill us with SIGPIPE.
  ::signal(SIGPIPE, SIG_IGN);
  int down[2];
  int up[2];
  if (::pipe2(down, O_CLOEXEC) != 0 || ::pipe2(up, O_CLOEXEC) != 0) {
    throw TransportError(std::string("pipe failed: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw TransportError(std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) {
    ::dup2(down[0], STDIN_FILENO);
    ::dup2(up[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(down[0]);
  ::close(up[1]);
  channel_->pid = pid;
  channel_->to_child = down[1];
  channel_->from_child = up[0];
  vocab_ = decode_hello(channel_->read_line());
}

ProcessOracle::~ProcessOracle() = default;

stats::LabelDistribution ProcessOracle::query(const Sample& sample) const {
  return query_batch(std::span<const Sample>(&sample, 1)).front();
}

std::vector<stats::LabelDistribution> ProcessOracle::query_batch(std::span<const Sample> samples) const {
  std::lock_guard lock(mutex_);
  const std::uint64_t first = next_id_;
  for (const Sample& s : samples) {
    validate_sample(s, true);
    channel_->write_line(encode_request(next_id_++, s, codec_));
  }
  // Drain every response before reporting a failure so the stream stays in
  // step for the next call.
  std::map<std::uint64_t, stats::LabelDistribution> received;
  std::size_t seen = 0;
  std::exception_ptr failure;
  while (seen < samples.size()) {
    const Response r = decode_response(channel_->read_line());
    if (r.id < first || r.id >= next_id_) throw ProtocolError("response for unknown id " + std::to_string(r.id));
    ++seen;
    try {
      if (!r.error_kind.empty()) {
        if (r.error_kind == "vocabulary") throw VocabularyError(r.error_message);
        throw ProtocolError(r.error_kind + ": " + r.error_message);
      }
      if (!received.emplace(r.id, accept_distribution(r.probs, vocab_.size())).second) {
        throw ProtocolError("duplicate response for id " + std::to_string(r.id));
      }
    } catch (const Error&) {
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<stats::LabelDistribution> out;
  out.reserve(samples.size());
  for (auto& [id, dist] : received) out.push_back(std::move(dist));
  return out;
}

OracleHandle oracle_from_environment(const TokenCodec& codec) {
  const char* command = std::getenv(kOracleCommandEnv);
  if (command == nullptr || *command == '\0') return nullptr;
  return std::make_shared<ProcessOracle>(command, codec);
}

}  // namespace mdp::oracle::wire
