#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "pacc/simlog.hpp"

using namespace pacc;

namespace {

GenConfig small_config(std::uint64_t seed = 7) {
  GenConfig g;
  g.num_queries = 200;
  g.seed = seed;
  return g;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::size_t parse_error_line(const std::string& text) {
  std::istringstream is(text);
  try {
    read_logs(is);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(ExaminationCurve, InversePowerClosedForm) {
  const auto t = examination_curve(10, 1.0);
  ASSERT_EQ(t.max_position(), 10u);
  for (int p = 1; p <= 10; ++p) EXPECT_DOUBLE_EQ(t.at(p), 1.0 / p);

  const auto flat = examination_curve(10, 0.0);
  for (double v : flat.probabilities) EXPECT_EQ(v, 1.0);

  const auto steep = examination_curve(6, 2.0);
  for (std::size_t i = 1; i < steep.probabilities.size(); ++i) {
    EXPECT_LT(steep.probabilities[i], steep.probabilities[i - 1]);
  }
}

TEST(GenerateLogs, StructuralInvariants) {
  const auto g = small_config();
  const auto logs = generate_logs(g);
  ASSERT_EQ(logs.records.size(), g.num_queries * g.items_per_query);
  EXPECT_EQ(logs.propensities, examination_curve(g.max_position, g.exam_exponent));

  std::map<std::int64_t, std::set<int>> positions;
  std::set<std::int64_t> items;
  for (const auto& r : logs.records) {
    EXPECT_LE(r.conversion, r.click);
    EXPECT_GE(r.position, 1);
    EXPECT_LE(static_cast<std::size_t>(r.position), g.max_position);
    EXPECT_EQ(r.features.size(), g.feature_dim);
    positions[r.query_id].insert(r.position);
    EXPECT_TRUE(items.insert(r.item_id).second);
  }
  ASSERT_EQ(positions.size(), g.num_queries);
  for (const auto& [q, ps] : positions) {
    EXPECT_EQ(ps.size(), g.items_per_query);
    EXPECT_EQ(*ps.begin(), 1);
    EXPECT_EQ(*ps.rbegin(), static_cast<int>(g.items_per_query));
  }
}

TEST(GenerateLogs, DefaultRatesNearTargets) {
  GenConfig g;
  g.num_queries = 20000;
  const auto logs = generate_logs(g);
  double clicks = 0, conversions = 0;
  for (const auto& r : logs.records) {
    clicks += r.click;
    conversions += r.conversion;
  }
  const auto n = static_cast<double>(logs.records.size());
  EXPECT_NEAR(clicks / n, 0.05, 0.01);
  EXPECT_NEAR(conversions / n, 0.005, 0.0015);
}

TEST(GenerateLogs, RejectsInvalidConfig) {
  GenConfig g = small_config();
  g.items_per_query = 12;
  EXPECT_THROW(generate_logs(g), ConfigError);

  g = small_config();
  g.exam_exponent = -1;
  EXPECT_THROW(generate_logs(g), ConfigError);

  g = small_config();
  g.ctr_weights = {1.0, 2.0};
  EXPECT_THROW(generate_logs(g), ConfigError);
}

TEST(GenerateLogs, ConfigErrorListsEveryProblem) {
  GenConfig g = small_config();
  g.items_per_query = 12;
  g.exam_exponent = -1;
  g.policy_noise = -2;
  try {
    generate_logs(g);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("items_per_query"), std::string::npos);
    EXPECT_NE(msg.find("exam_exponent"), std::string::npos);
    EXPECT_NE(msg.find("policy_noise"), std::string::npos);
  }
}

TEST(GenerateLogs, RandomPolicyRecoversExaminationRatios) {
  GenConfig g;
  g.num_queries = 100000;  // 10^6 impressions
  g.policy_noise = std::numeric_limits<double>::infinity();
  g.ctr_weights = default_ctr_weights(g.feature_dim);
  g.ctr_weights.back() = 0.0;
  const auto logs = generate_logs(g);
  std::vector<double> clicks(g.max_position, 0.0), shown(g.max_position, 0.0);
  for (const auto& r : logs.records) {
    clicks[r.position - 1] += r.click;
    shown[r.position - 1] += 1;
  }
  const double top = clicks[0] / shown[0];
  for (std::size_t p = 1; p <= g.max_position; ++p) {
    const double ratio = (clicks[p - 1] / shown[p - 1]) / top;
    EXPECT_NEAR(ratio, logs.propensities.at(static_cast<int>(p)) / logs.propensities.at(1), 0.02) << "position " << p;
  }
}

TEST(GenerateLogs, NoExaminationBiasWhenGammaZero) {
  GenConfig g;
  g.num_queries = 20000;
  g.exam_exponent = 0.0;
  const auto logs = generate_logs(g);
  const auto w = default_ctr_weights(g.feature_dim);
  std::vector<double> clicks(g.max_position, 0.0), expected(g.max_position, 0.0), shown(g.max_position, 0.0);
  for (const auto& r : logs.records) {
    clicks[r.position - 1] += r.click;
    expected[r.position - 1] += nn::sigmoid(logistic_logit(w, r.features));
    shown[r.position - 1] += 1;
  }
  for (std::size_t p = 0; p < g.max_position; ++p) {
    const double n = shown[p];
    const double mean = expected[p] / n;
    const double sd = std::sqrt(mean * (1 - mean) / n);
    EXPECT_NEAR(clicks[p] / n, mean, 4 * sd) << "position " << p + 1;
  }
}

TEST(GenerateLogs, BiasedPolicyCorrelatesRelevanceWithPosition) {
  const auto logs = generate_logs(small_config());
  const auto w = default_ctr_weights(8);
  double top = 0, bottom = 0, n_top = 0, n_bottom = 0;
  for (const auto& r : logs.records) {
    const double z = logistic_logit(w, r.features);
    if (r.position == 1) {
      top += z;
      ++n_top;
    } else if (r.position == 10) {
      bottom += z;
      ++n_bottom;
    }
  }
  EXPECT_GT(top / n_top, bottom / n_bottom + 1.0);
}

TEST(GenerateLogs, DeterministicUnderSeed) {
  const auto a = generate_logs(small_config(3));
  const auto b = generate_logs(small_config(3));
  const auto c = generate_logs(small_config(4));
  EXPECT_EQ(a.records, b.records);
  EXPECT_NE(a.records, c.records);
}

TEST(GenerateLogs, QueriesDoNotDependOnTotalCount) {
  auto g = small_config();
  const auto small = generate_logs(g);
  g.num_queries = 400;
  const auto large = generate_logs(g);
  for (std::size_t i = 0; i < small.records.size(); ++i) EXPECT_EQ(small.records[i], large.records[i]);
}

TEST(OneHot, Examples) {
  EXPECT_EQ(one_hot_position(1, 4), (std::vector<double>{1, 0, 0, 0}));
  EXPECT_EQ(one_hot_position(4, 4), (std::vector<double>{0, 0, 0, 1}));
  for (int p = 1; p <= 10; ++p) {
    const auto v = one_hot_position(p, 10);
    double sum = 0;
    for (double x : v) sum += x;
    EXPECT_EQ(sum, 1.0);
    EXPECT_EQ(v[p - 1], 1.0);
  }
  EXPECT_THROW(one_hot_position(0, 4), DomainError);
  EXPECT_THROW(one_hot_position(5, 4), DomainError);
}

TEST(LogFile, RoundTripIsExact) {
  const auto logs = generate_logs(small_config());
  std::stringstream ss;
  write_logs(ss, logs.records);
  const auto back = read_logs(ss);
  EXPECT_EQ(back, logs.records);

  std::stringstream again;
  write_logs(again, back);
  std::stringstream first;
  write_logs(first, logs.records);
  EXPECT_EQ(again.str(), first.str());
}

TEST(LogFile, HeaderAndNineSignificantDigits) {
  LogRecord r;
  r.query_id = 3;
  r.item_id = 31;
  r.position = 2;
  r.click = 1;
  r.conversion = 0;
  r.features = {quantize_feature(0.123456789012), quantize_feature(-1e-12)};
  std::stringstream ss;
  write_logs(ss, std::vector<LogRecord>{r});
  EXPECT_EQ(ss.str(), "query_id,item_id,position,click,conversion,f0,f1\n3,31,2,1,0,0.123456789,-1e-12\n");
}

TEST(LogFile, SameSeedGivesByteIdenticalFile) {
  const auto dir = std::filesystem::temp_directory_path() / "pacc_simlog_bytes";
  std::filesystem::create_directories(dir);
  write_logs((dir / "a.csv").string(), generate_logs(small_config(11)).records);
  write_logs((dir / "b.csv").string(), generate_logs(small_config(11)).records);
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  EXPECT_EQ(read_logs((dir / "a.csv").string()).size(), 2000u);
  std::filesystem::remove_all(dir);
}

TEST(LogFile, ParseErrorsNameTheLine) {
  const std::string header = "query_id,item_id,position,click,conversion,f0\n";
  EXPECT_EQ(parse_error_line(header + "0,0,1,0,0,0.5\n0,1,2,0,0\n"), 3u);
  EXPECT_EQ(parse_error_line(header + "0,0,1,0,0,abc\n"), 2u);
  EXPECT_EQ(parse_error_line(header + "0,0,1,0,0,0.1\n0,1,2,0,0,0.2\n0,2,3,0,1,0.3\n"), 4u);
  EXPECT_EQ(parse_error_line(header + "x,0,1,0,0,0.1\n"), 2u);
  EXPECT_EQ(parse_error_line(header + "0,0,0,0,0,0.1\n"), 2u);
  EXPECT_EQ(parse_error_line(header + "0,0,1,2,0,0.1\n"), 2u);
  EXPECT_EQ(parse_error_line("bogus\n"), 1u);
  EXPECT_EQ(parse_error_line(""), 1u);

  std::istringstream is(header + "0,0,1,0,1,0.5\n");
  try {
    read_logs(is);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("conversion=1 with click=0"), std::string::npos);
  }
}

TEST(LogFile, MissingFileIsIoError) {
  EXPECT_THROW(read_logs(std::string("/nonexistent/dir/logs.csv")), IoError);
}

TEST(PropensityFile, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "pacc_simlog_prop";
  std::filesystem::create_directories(dir);
  const auto t = examination_curve(10, 1.3);
  write_propensities((dir / "p.csv").string(), t);
  EXPECT_EQ(read_propensities((dir / "p.csv").string()), t);
  EXPECT_EQ(slurp(dir / "p.csv").substr(0, 17), "position,theta\n1,");
  std::filesystem::remove_all(dir);
}

TEST(PropensityTable, RelativeToTop) {
  PropensityTable t{{0.8, 0.4, 0.2}};
  EXPECT_EQ(t.relative_to_top(), (std::vector<double>{1.0, 0.5, 0.25}));
}

TEST(Split, QueryLevelAndDeterministic) {
  const auto logs = generate_logs(small_config());
  const auto a = split_dataset(logs.records, {0.7, 0.1, 0.2}, 5);
  const auto b = split_dataset(logs.records, {0.7, 0.1, 0.2}, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.train.size() + a.validation.size() + a.test.size(), logs.records.size());

  std::map<std::int64_t, int> owner;
  auto mark = [&](const std::vector<LogRecord>& part, int id) {
    for (const auto& r : part) {
      auto [it, inserted] = owner.emplace(r.query_id, id);
      EXPECT_EQ(it->second, id) << "query " << r.query_id << " split across parts";
    }
  };
  mark(a.train, 0);
  mark(a.validation, 1);
  mark(a.test, 2);
  EXPECT_EQ(a.train.size(), 1400u);
  EXPECT_EQ(a.validation.size(), 200u);
  EXPECT_EQ(a.test.size(), 400u);

  const auto c = split_dataset(logs.records, {0.7, 0.1, 0.2}, 6);
  EXPECT_NE(a.test, c.test);
}

TEST(Split, RejectsBadFractionsAndEmptyParts) {
  const auto logs = generate_logs(small_config());
  EXPECT_THROW(split_dataset(logs.records, {0.5, 0.1, 0.1}, 1), ConfigError);
  EXPECT_THROW(split_dataset(logs.records, {1.0, 0.0, 0.0}, 1), ConfigError);
  const std::vector<LogRecord> two(logs.records.begin(), logs.records.begin() + 20);
  EXPECT_THROW(split_dataset(two, {0.7, 0.1, 0.2}, 1), ConfigError);
}
