#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include <kmedecon/io.hpp>

#include "oracles.hpp"

using namespace kmedecon;

namespace {

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "kmedecon_io_test";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("format_double round-trips exactly and prefers short forms") {
  CHECK(format_double(0.0) == "0");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-2.25) == "-2.25");

  const double cases[] = {1.0 / 3.0,  3.141592653589793, 1e-300, 1e300,
                          -0.1234567, 2.2250738585072014e-308,
                          0.30000000000000004};
  for (double v : cases) {
    const std::string s = format_double(v);
    double back = 0.0;
    std::sscanf(s.c_str(), "%lf", &back);
    CHECK(back == v);
  }

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 200; ++i) {
    const double v = u(rng);
    double back = 0.0;
    std::sscanf(format_double(v).c_str(), "%lf", &back);
    CHECK(back == v);
  }
}

TEST_CASE("write_csv produces the exact expected bytes") {
  Matrix rows(2, 3);
  rows << 0.0, 0.5, -1.25, 3.0, 0.1, 100.0;
  const auto path = temp_dir() / "small.csv";
  write_csv(path, {"a", "b", "c"}, rows);
  CHECK(read_text(path) == "a,b,c\n0,0.5,-1.25\n3,0.1,100\n");
}

TEST_CASE("write_csv rejects a header that does not match the column count") {
  Matrix rows = Matrix::Zero(1, 2);
  CHECK_THROWS_AS(write_csv(temp_dir() / "bad.csv", {"a"}, rows),
                  DimensionError);
}

TEST_CASE("repeated writes of the same data are byte-identical") {
  Matrix rows = oracles::random_points(6, 4, 11);
  const auto p1 = temp_dir() / "rep1.csv";
  const auto p2 = temp_dir() / "rep2.csv";
  write_csv(p1, {"w", "x", "y", "z"}, rows);
  write_csv(p2, {"w", "x", "y", "z"}, rows);
  CHECK(read_text(p1) == read_text(p2));
}

TEST_CASE("read_text on a missing file reports a config error") {
  CHECK_THROWS_AS(read_text(temp_dir() / "does_not_exist.txt"), ConfigError);
}

TEST_CASE("fnv1a64 matches published reference values") {
  CHECK(fnv1a64("") == 14695981039346656037ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
  CHECK(hex64(fnv1a64("foobar")) == "85944171f73967e8");
  CHECK(hex64(0) == "0000000000000000");
}

TEST_CASE("load_json_file rejects malformed JSON") {
  const auto path = temp_dir() / "broken.json";
  write_text(path, "{\"a\": ");
  CHECK_THROWS_AS(load_json_file(path), ConfigError);
}

TEST_CASE("strict schema helpers reject unknown fields and wrong types") {
  Json j = Json::parse(R"({"n": 4, "rate": 0.5, "name": "x"})");
  CHECK_NOTHROW(check_keys(j, {"n", "rate", "name"}, "ctx"));
  CHECK_THROWS_AS(check_keys(j, {"n", "rate"}, "ctx"), ConfigError);
  CHECK_THROWS_AS(check_keys(Json::array(), {}, "ctx"), ConfigError);

  CHECK(get_int(j, "n", "ctx") == 4);
  CHECK(get_double(j, "rate", "ctx") == doctest::Approx(0.5));
  CHECK(get_string(j, "name", "ctx") == "x");
  CHECK_THROWS_AS(get_int(j, "rate", "ctx"), ConfigError);
  CHECK_THROWS_AS(get_double(j, "name", "ctx"), ConfigError);
  CHECK_THROWS_AS(get_double(j, "missing", "ctx"), ConfigError);
  CHECK_THROWS_AS(get_string(j, "n", "ctx"), ConfigError);

  CHECK(get_int_or(j, "absent", 9, "ctx") == 9);
  CHECK(get_double_or(j, "absent", 2.5, "ctx") == doctest::Approx(2.5));
  CHECK(get_bool_or(j, "absent", true, "ctx"));
  CHECK_THROWS_AS(get_bool_or(j, "n", false, "ctx"), ConfigError);
  CHECK_THROWS_AS(get_int_or(j, "rate", 0, "ctx"), ConfigError);
}

TEST_CASE("kernel specs survive a JSON round trip") {
  Vector ls(2);
  ls << 0.7, 2.5;
  KernelSpec ard = KernelSpec::gaussian_ard(ls, 1.8);
  KernelSpec back = kernel_from_json(kernel_to_json(ard), "ctx");
  CHECK(back.family == ard.family);
  CHECK((back.lengthscales - ard.lengthscales).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.signal_variance == ard.signal_variance);

  KernelSpec poly = KernelSpec::polynomial(3, 0.4);
  KernelSpec poly_back = kernel_from_json(kernel_to_json(poly), "ctx");
  CHECK(poly_back.family == KernelFamily::Polynomial);
  CHECK(poly_back.degree == 3);
  CHECK(poly_back.signal_variance == doctest::Approx(0.4));
}

TEST_CASE("kernel parsing rejects bad fields") {
  CHECK_THROWS_AS(
      kernel_from_json(Json::parse(R"({"family":"gaussian","bogus":1})"), "ctx"),
      ConfigError);
  CHECK_THROWS_AS(
      kernel_from_json(Json::parse(R"({"family":"gaussian","lengthscales":[]})"),
                       "ctx"),
      ConfigError);
  CHECK_THROWS_AS(
      kernel_from_json(
          Json::parse(R"({"family":"gaussian","lengthscales":["a"]})"), "ctx"),
      ConfigError);
  CHECK_THROWS_AS(kernel_from_json(Json::parse(R"({"family":"nope"})"), "ctx"),
                  ConfigError);
}

TEST_CASE("fitted model export carries weights and configuration") {
  TaskTransformedDataset d;
  d.x = oracles::random_points(5, 2, 21);
  d.y = oracles::random_points(5, 1, 22);
  d.y_tilde = oracles::random_points(8, 1, 23);
  d.z_tilde = oracles::random_vector(8, 24);
  auto model = dme_fit(d, KernelSpec::gaussian(1.1), KernelSpec::gaussian(0.9),
                       0.05, 0.05, DmeForm::Woodbury);
  Json j = dme_model_to_json(model);
  CHECK(j["alpha"].size() == 5);
  CHECK(j["anchors_x"].size() == 5);
  CHECK(j["anchors_x"][0].size() == 2);
  CHECK(j["lambda"].get<double>() == doctest::Approx(0.05));
  CHECK(j["epsilon"].get<double>() == doctest::Approx(0.05));
  CHECK(j["form"] == "woodbury");
  CHECK(j["kernel_k"]["family"] == "gaussian");
  for (Eigen::Index i = 0; i < 5; ++i) {
    CHECK(j["alpha"][static_cast<size_t>(i)].get<double>() ==
          doctest::Approx(model.alpha()(i)));
  }
}
