#pragma once

// Oracle wire protocol v1: newline-delimited JSON over a process's standard
// streams. The server speaks first with a hello record.
//
//   hello    {"op":"hello","protocol":"mdp-oracle","version":1,
//             "label_tokens":[...],"token_class":[...]}
//   request  {"id":7,"op":"query","tokens":["w3","[MASK]"],"masked_positions":[1]}
//   response {"id":7,"probs":[0.25,0.75]}
//   failure  {"id":7,"error":{"kind":"vocabulary","message":"..."}}
//
// Responses may come back in any order; clients match them by id.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mdp/oracle.hpp"

namespace mdp::oracle::wire {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::string_view kProtocolName = "mdp-oracle";
inline constexpr const char* kOracleCommandEnv = "MDP_ORACLE_CMD";
// A received distribution may miss unit mass by this much before it is
// renormalised; anything worse is a protocol error.
inline constexpr double kMassTolerance = 1e-6;

// Token id <-> surface string. Index i of names is the surface form of id i.
class TokenCodec {
 public:
  TokenCodec() = default;
  explicit TokenCodec(std::vector<std::string> names);

  [[nodiscard]] const std::string& encode(TokenId token) const;  // VocabularyError
  [[nodiscard]] TokenId decode(std::string_view name) const;     // VocabularyError
  [[nodiscard]] std::size_t size() const noexcept { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, TokenId> ids_;
};

struct Request {
  std::uint64_t id = 0;
  Sample sample;  // masked positions hold kMaskToken
};

struct Response {
  std::uint64_t id = 0;
  std::vector<double> probs;  // empty when error_kind is set
  std::string error_kind;
  std::string error_message;
};

[[nodiscard]] std::string encode_hello(const VocabularyDescriptor& vocab);
// ProtocolError on a wrong protocol name or version.
[[nodiscard]] VocabularyDescriptor decode_hello(std::string_view line);

[[nodiscard]] std::string encode_request(std::uint64_t id, const Sample& sample, const TokenCodec& codec);
[[nodiscard]] Request decode_request(std::string_view line, const TokenCodec& codec);

[[nodiscard]] std::string encode_response(std::uint64_t id, const stats::LabelDistribution& dist);
[[nodiscard]] std::string encode_error(std::optional<std::uint64_t> id, std::string_view kind,
                                       std::string_view message);
[[nodiscard]] Response decode_response(std::string_view line);

// Checks length and mass (within kMassTolerance) and renormalises when the
// sum is off by more than 1e-9. ProtocolError otherwise.
[[nodiscard]] stats::LabelDistribution accept_distribution(const std::vector<double>& probs,
                                                           std::size_t expected_size);

// Writes hello, then answers every request line from in until EOF. Bad
// requests get an error record and the loop continues. Returns the number of
// requests answered successfully.
std::size_t serve_oracle(const Oracle& oracle, const TokenCodec& codec, std::istream& in, std::ostream& out);

// Oracle backed by a child process speaking the protocol. Access is
// serialised internally, so one instance may be shared across threads.
class ProcessOracle final : public Oracle {
 public:
  ProcessOracle(const std::string& command, TokenCodec codec);
  ~ProcessOracle() override;

  ProcessOracle(const ProcessOracle&) = delete;
  ProcessOracle& operator=(const ProcessOracle&) = delete;

  [[nodiscard]] stats::LabelDistribution query(const Sample& sample) const override;
  [[nodiscard]] std::vector<stats::LabelDistribution> query_batch(std::span<const Sample> samples) const override;
  [[nodiscard]] const VocabularyDescriptor& vocabulary() const override { return vocab_; }

 private:
  struct Channel;
  std::unique_ptr<Channel> channel_;
  TokenCodec codec_;
  VocabularyDescriptor vocab_;
  mutable std::mutex mutex_;
  mutable std::uint64_t next_id_ = 1;
};

// ProcessOracle for the command in MDP_ORACLE_CMD, or nullptr when unset.
[[nodiscard]] OracleHandle oracle_from_environment(const TokenCodec& codec);

}  // namespace mdp::oracle::wire
