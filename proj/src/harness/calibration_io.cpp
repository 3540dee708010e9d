#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mdp/errors.hpp"
#include "mdp/harness.hpp"

namespace mdp::harness {

using nlohmann::json;

namespace {
constexpr const char* kCalibrationFormat = "mdp-calibration";
}

void save_calibration(const std::string& path, const CalibrationFile& file) {
  json anchors = json::array();
  for (const auto& a : file.anchors.anchors) {
    anchors.push_back({{"sample_id", a.sample_id},
                       {"probs", std::vector<double>(a.dist.probs().begin(), a.dist.probs().end())}});
  }
  const json root = {{"format", kCalibrationFormat},
                     {"allowance", file.allowance},
                     {"masking_rate", file.masking.rate},
                     {"trials", file.masking.trials},
                     {"seed", file.masking.seed},
                     {"gamma", file.calibration.gamma},
                     {"train_scores", file.calibration.train_scores},
                     {"anchors", anchors}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << root.dump(2) << '\n';
  if (!out) throw IoError("calibration write failed");
}

CalibrationFile load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream text;
  text << in.rdbuf();
  const json root = json::parse(text.str(), nullptr, false);
  if (root.is_discarded() || !root.is_object() || root.value("format", "") != kCalibrationFormat) {
    throw IoError("'" + path + "' is not a calibration file");
  }
  try {
    CalibrationFile file;
    file.allowance = root.at("allowance").get<double>();
    file.masking.rate = root.at("masking_rate").get<double>();
    file.masking.trials = root.at("trials").get<int>();
    file.masking.seed = root.at("seed").get<std::uint64_t>();
    file.calibration.gamma = root.at("gamma").get<double>();
    file.calibration.train_scores = root.at("train_scores").get<std::vector<double>>();
    for (const auto& a : root.at("anchors")) {
      file.anchors.anchors.push_back(
          {a.at("sample_id").get<oracle::SampleId>(), stats::LabelDistribution(a.at("probs").get<std::vector<double>>())});
    }
    file.masking.validate();
    return file;
  } catch (const json::exception& e) {
    throw IoError("bad calibration file: " + std::string(e.what()));
  } catch (const ParameterError& e) {
    throw IoError("bad calibration file: " + std::string(e.what()));
  }
}

}  // namespace mdp::harness
