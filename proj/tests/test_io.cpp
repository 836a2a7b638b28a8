#include <gtest/gtest.h>

#include <filesystem>

#include "survlr/io.hpp"
#include "survlr/simulate.hpp"

using namespace survlr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("survlr_test_io_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

ErrorKind kind_of_reading(const std::string& content) {
  const auto path = scratch("bad.csv");
  write_file_atomic(path, content);
  try {
    read_cohort_csv(path);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error for:\n" << content;
  return ErrorKind::Io;
}

}  // namespace

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(4000.0), "4000");
  for (double v : {1.0 / 3.0, 3068.812, 1e-300, -2.5e17}) EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(ConfigHash, StableAndSensitive) {
  json a = {{"n", 10}, {"seed", 1}};
  json b = {{"n", 10}, {"seed", 2}};
  EXPECT_EQ(config_hash(a), config_hash(json{{"n", 10}, {"seed", 1}}));
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
}

TEST(Checkpoint, RoundTripIsExact) {
  Checkpoint ckpt;
  ckpt.network = make_network(NetworkSpec{{3, 7, 4, 3}, Activation::Tanh, 123456789012345ULL});
  ckpt.standardizer.mean = VectorD::Random(3);
  ckpt.standardizer.scale = VectorD::Random(3).cwiseAbs();
  ckpt.config_hash = "abc";
  const auto path = scratch("model.json");
  save_checkpoint(path, ckpt);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.network.spec.layer_sizes, ckpt.network.spec.layer_sizes);
  EXPECT_EQ(back.network.spec.hidden_activation, Activation::Tanh);
  EXPECT_EQ(back.network.spec.seed, 123456789012345ULL);
  EXPECT_EQ(back.network.params.flatten(), ckpt.network.params.flatten());
  EXPECT_EQ(back.standardizer.mean, ckpt.standardizer.mean);
  EXPECT_EQ(back.standardizer.scale, ckpt.standardizer.scale);
  EXPECT_EQ(back.config_hash, "abc");
  // the serialized form is itself stable
  EXPECT_EQ(checkpoint_json(back).dump(), checkpoint_json(ckpt).dump());
}

TEST(Checkpoint, WithoutStandardizer) {
  Checkpoint ckpt;
  ckpt.network = make_network(NetworkSpec{{2, 3}});
  const auto back = checkpoint_from_json(checkpoint_json(ckpt));
  EXPECT_TRUE(back.standardizer.empty());
}

TEST(Checkpoint, RejectsMalformed) {
  auto j = checkpoint_json(Checkpoint{make_network(NetworkSpec{{2, 3}}), {}, ""});
  auto wrong_size = j;
  wrong_size["parameters"].erase(0);
  EXPECT_THROW(checkpoint_from_json(wrong_size), Error);
  auto wrong_format = j;
  wrong_format["format"] = "other";
  EXPECT_THROW(checkpoint_from_json(wrong_format), Error);
  auto missing = j;
  missing.erase("layer_sizes");
  EXPECT_THROW(checkpoint_from_json(missing), Error);
  try {
    load_checkpoint(scratch("does_not_exist.json"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
}

TEST(CohortCsv, RoundTripIsExact) {
  const auto cohort = generate_cohort(paper_synthetic_spec(50, 3));
  const auto path = scratch("cohort.csv");
  write_file_atomic(path, cohort_csv(cohort.features, cohort.records, cohort.truth));
  const auto back = read_cohort_csv(path);
  EXPECT_EQ(back.features, cohort.features);
  ASSERT_TRUE(back.truth.has_value());
  EXPECT_EQ(*back.truth, cohort.truth);
  for (std::size_t i = 0; i < cohort.records.size(); ++i) {
    EXPECT_EQ(back.records[i].time, cohort.records[i].time);
    EXPECT_EQ(back.records[i].event, cohort.records[i].event);
  }
  EXPECT_EQ(read_file(path).substr(0, 45), "time,event,truth,feature_0,feature_1,feature_");
}

TEST(CohortCsv, TruthIsOptional) {
  const auto path = scratch("plain.csv");
  write_file_atomic(path, "time,event,feature_0\n1.5,1,0.25\n2,0,-1\n");
  const auto back = read_cohort_csv(path);
  EXPECT_FALSE(back.truth.has_value());
  EXPECT_EQ(back.features(1, 0), -1.0);
  EXPECT_FALSE(back.records[1].event);
}

TEST(CohortCsv, ProvenanceCommentIsSkipped) {
  const auto path = scratch("commented.csv");
  write_file_atomic(path, csv_provenance("0123456789abcdef", 7) + "time,event\n3,1\n");
  EXPECT_EQ(read_file(path).substr(0, 42), "# config_hash=0123456789abcdef seed=7\ntime");
  EXPECT_EQ(read_cohort_csv(path).records.size(), 1u);
}

TEST(CohortCsv, ParseErrors) {
  EXPECT_EQ(kind_of_reading("time,feature_0\n1,2\n"), ErrorKind::InvalidInput);
  EXPECT_EQ(kind_of_reading("time,event\n1,2\n"), ErrorKind::InvalidInput);
  EXPECT_EQ(kind_of_reading("time,event\nabc,1\n"), ErrorKind::InvalidInput);
  EXPECT_EQ(kind_of_reading("time,event\n-1,1\n"), ErrorKind::InvalidInput);
  EXPECT_EQ(kind_of_reading("time,event\n1,1,7\n"), ErrorKind::InvalidInput);
  EXPECT_EQ(kind_of_reading(""), ErrorKind::InvalidInput);
}

TEST(DigitsCsv, FixtureLoads) {
  const auto data = read_digits_csv(fs::path(SURVLR_FIXTURES) / "digits_8x8.csv");
  EXPECT_EQ(data.digits.size(), 1797u);
  EXPECT_EQ(data.pixels.cols(), 64);
  EXPECT_GE(data.pixels.minCoeff(), 0.0);
  EXPECT_LE(data.pixels.maxCoeff(), 16.0);
  EXPECT_EQ(std::count_if(data.digits.begin(), data.digits.end(), [](int d) { return d != 0; }), 1619);
}

TEST(Artifacts, HistoryAndKmLayout) {
  TrainResult result;
  result.history = {{1, 0.5, 0.75, 2.5}, {2, 1.0, 1.25, 2.5}};
  EXPECT_EQ(history_csv(result), "epoch,objective,statistic,penalty\n1,0.5,0.75,2.5\n2,1,1.25,2.5\n");
  const std::vector<SurvivalRecord> records{{1, true}, {2, false}, {3, true}};
  std::vector<std::optional<StepSurvivalCurve>> curves{kaplan_meier(records), std::nullopt};
  const auto km = km_csv(curves);
  EXPECT_EQ(km.substr(0, km.find('\n')), "cluster,time,survival,ci_lower,ci_upper,at_risk,events");
  EXPECT_NE(km.find("\n0,0,1,1,1,,\n"), std::string::npos);
  EXPECT_EQ(km.find("\n1,"), std::string::npos);
}

TEST(Artifacts, ReportJsonFields) {
  RecoveryReport r;
  r.subjects = 3;
  r.cluster_sizes = {1, 2};
  r.recovery = RecoveryMetrics{{1, 0}, {0.75, 0.75}, MatrixD::Identity(2, 2), 1.0};
  const auto j = report_json(r);
  EXPECT_EQ(j["matching"], json({1, 0}));
  EXPECT_EQ(j["confusion"][1][1], 1.0);
  EXPECT_NE(report_table(r, "t").find("AUC per class"), std::string::npos);
}
