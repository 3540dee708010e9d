#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "mdp/errors.hpp"
#include "mdp/masking.hpp"
#include "mdp/sim/io.hpp"
#include "mdp/sim/synthetic_task.hpp"
#include "mdp/wire.hpp"
#include "support.hpp"

using namespace mdp;
using namespace mdp::oracle::wire;
using oracle::Sample;

namespace {

const std::string kData = MDP_TEST_DATA_DIR;
const std::string kCli = MDP_CLI_PATH;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

TokenCodec default_codec() { return TokenCodec(sim::VocabLayout{}.token_names()); }

std::string serve_command() { return kCli + " serve-oracle --checkpoint " + kData + "/oracle_checkpoint.txt"; }

}  // namespace

TEST_CASE("the codec maps surface forms both ways") {
  const auto codec = default_codec();
  CHECK(codec.encode(0) == "[MASK]");
  CHECK(codec.decode("w7") == sim::VocabLayout{}.filler_begin() + 7);
  CHECK_THROWS_AS((void)codec.decode("nope"), VocabularyError);
  CHECK_THROWS_AS((void)codec.encode(100000), VocabularyError);
  CHECK_THROWS_AS(TokenCodec({"a", "b", "a"}), ParameterError);
}

TEST_CASE("hello records round trip and are checked") {
  const auto vocab = oracle::VocabularyDescriptor::contiguous(2, 2);
  const auto back = decode_hello(encode_hello(vocab));
  CHECK(back.num_classes() == 2);
  CHECK(back.size() == 4);
  CHECK(back.tokens_of(1) == vocab.tokens_of(1));
  CHECK_THROWS_AS((void)decode_hello(R"({"op":"hello","protocol":"other","version":1,"label_tokens":["a"],"token_class":[0]})"),
                  ProtocolError);
  CHECK_THROWS_AS((void)decode_hello(R"({"op":"hello","protocol":"mdp-oracle","version":2,"label_tokens":["a","b"],"token_class":[0,1]})"),
                  ProtocolError);
  CHECK_THROWS_AS((void)decode_hello("{\"op\":\"query\"}"), ProtocolError);
  CHECK_THROWS_AS((void)decode_hello("not json"), ProtocolError);
}

TEST_CASE("requests round trip with their masks") {
  const auto codec = default_codec();
  const Sample s{5, {60, oracle::kMaskToken, 70, 169}, {}, false};
  const std::string line = encode_request(42, s, codec);
  CHECK(line.find("\"masked_positions\":[1]") != std::string::npos);
  const auto r = decode_request(line, codec);
  CHECK(r.id == 42);
  CHECK(r.sample.tokens == s.tokens);

  CHECK_THROWS_AS((void)decode_request(R"({"id":1,"op":"query","tokens":["w1","bogus"]})", codec), VocabularyError);
  CHECK_THROWS_AS((void)decode_request(R"({"id":1,"op":"train","tokens":["w1"]})", codec), ProtocolError);
  CHECK_THROWS_AS((void)decode_request(R"({"id":-1,"op":"query","tokens":["w1"]})", codec), ProtocolError);
  CHECK_THROWS_AS((void)decode_request(R"({"id":1,"op":"query","tokens":["w1"],"masked_positions":[3]})", codec),
                  ProtocolError);
  CHECK_THROWS_AS((void)decode_request(R"({"id":1,"op":"query","tokens":[1,2]})", codec), ProtocolError);
}

TEST_CASE("responses and failures round trip") {
  const stats::LabelDistribution d({0.1, 0.2, 0.3, 0.4});
  const auto r = decode_response(encode_response(9, d));
  CHECK(r.id == 9);
  CHECK(r.probs == std::vector<double>(d.probs().begin(), d.probs().end()));
  CHECK(r.error_kind.empty());

  const auto e = decode_response(encode_error(3, "vocabulary", "unknown token 'x'"));
  CHECK(e.id == 3);
  CHECK(e.error_kind == "vocabulary");
  CHECK(e.error_message == "unknown token 'x'");
  CHECK(e.probs.empty());

  CHECK_THROWS_AS((void)decode_response(R"({"id":1})"), ProtocolError);
  CHECK_THROWS_AS((void)decode_response(R"({"id":1,"probs":["a"]})"), ProtocolError);
}

TEST_CASE("received distributions are checked and renormalised") {
  const auto exact = accept_distribution({0.25, 0.75}, 2);
  CHECK(exact[0] == 0.25);
  CHECK(exact[1] == 0.75);
  const auto fixed = accept_distribution({0.5, 0.5000004}, 2);
  CHECK(fixed[0] + fixed[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS((void)accept_distribution({0.5, 0.6}, 2), ProtocolError);
  CHECK_THROWS_AS((void)accept_distribution({1.0}, 2), ProtocolError);
  CHECK_THROWS_AS((void)accept_distribution({-0.5, 1.5}, 2), ProtocolError);
}

TEST_CASE("serve_oracle answers in-process and survives bad lines") {
  const auto ck = sim::load_checkpoint(kData + "/oracle_checkpoint.txt");
  const sim::SimulatorOracle oracle(ck.model);
  std::istringstream in(slurp(kData + "/oracle_requests.jsonl"));
  std::ostringstream out;
  const auto answered = serve_oracle(oracle, TokenCodec(ck.layout.token_names()), in, out);
  CHECK(answered == 25);
  CHECK(out.str() == slurp(kData + "/oracle_responses.jsonl"));
}

TEST_CASE("the CLI server reproduces the recorded responses byte for byte") {
  const std::string out_path = "wire_vectors_out.jsonl";
  const std::string cmd = serve_command() + " < " + kData + "/oracle_requests.jsonl > " + out_path;
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(slurp(out_path) == slurp(kData + "/oracle_responses.jsonl"));
}

TEST_CASE("a child-process oracle agrees with the in-process simulator") {
  const auto ck = sim::load_checkpoint(kData + "/oracle_checkpoint.txt");
  const sim::SimulatorOracle local(ck.model);
  const ProcessOracle remote(serve_command(), TokenCodec(ck.layout.token_names()));
  CHECK(remote.vocabulary().size() == local.vocabulary().size());

  const auto data = sim::generate_dataset(sim::SyntheticTask{}, 1, 1000, 11);
  auto samples = data.test;
  Rng rng(2);
  for (std::size_t i = 0; i < samples.size(); i += 3) {
    for (auto p : draw_mask_positions(samples[i].tokens.size(), 0.2, rng)) samples[i].tokens[p] = oracle::kMaskToken;
  }
  const auto batch = remote.query_batch(samples);
  REQUIRE(batch.size() == samples.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto expected = local.query(samples[i]);
    for (std::size_t v = 0; v < expected.size(); ++v) worst = std::max(worst, std::abs(batch[i][v] - expected[v]));
  }
  CHECK(worst <= 1e-9);
  CHECK(remote.query(samples[0]) == local.query(samples[0]));

  // An id outside the vocabulary is rejected before anything is sent.
  const Sample unknown{1, {static_cast<oracle::TokenId>(ck.layout.size() + 5)}, {}, false};
  CHECK_THROWS_AS((void)remote.query(unknown), VocabularyError);
  // And the channel stays usable afterwards.
  CHECK(remote.query(samples[1]) == local.query(samples[1]));
}

TEST_CASE("a dead backend is a transport error") {
  CHECK_THROWS_AS(ProcessOracle("/bin/false", default_codec()), TransportError);
}

TEST_CASE("the environment variable selects a process oracle") {
  unsetenv(kOracleCommandEnv);
  CHECK(oracle_from_environment(default_codec()) == nullptr);
  setenv(kOracleCommandEnv, serve_command().c_str(), 1);
  const auto handle = oracle_from_environment(default_codec());
  REQUIRE(handle != nullptr);
  CHECK(handle->vocabulary().num_classes() == 2);
  unsetenv(kOracleCommandEnv);
}
