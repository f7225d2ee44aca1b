#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "cascade/error.hpp"
#include "cascade/json_io.hpp"
#include "cascade/spectral.hpp"

using namespace cascade;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("cascade_json_io_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(FlatFnJson, ZeroIsEmptyTerms) { EXPECT_EQ(serialize(FlatFn{}), R"({"terms":[]})"); }

TEST(FlatFnJson, RoundTripKeepsEveryBit) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 50; ++i) {
    const FlatFn f({{Complex(u(rng), u(rng) * 1e-17), i % 5 - 2, Rational(i + 1, 7), i * 1000003LL - 25000000},
                    {Complex(std::nextafter(1.0, 2.0), -0.1), 3, Rational(1, 3), -i}});
    EXPECT_EQ(parse_flatfn(serialize(f)), f);
  }
}

TEST(FlatFnJson, SchemaErrorsCarryPaths) {
  const auto expect_path = [](const std::string& text, const std::string& path) {
    try {
      parse_flatfn(text);
      ADD_FAILURE() << "accepted " << text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.path(), path) << e.what();
    }
  };
  expect_path(R"({"terms":[{"re":1,"im":0,"p":0,"k_num":-1,"k_den":1,"theta":0}]})", "/terms/0/k_num");
  expect_path(R"({"terms":[{"re":1,"im":0,"p":0,"k_num":2,"k_den":4,"theta":0}]})", "/terms/0/k_num");
  expect_path(R"({"terms":[{"re":1,"im":0,"p":0,"k_num":1,"k_den":0,"theta":0}]})", "/terms/0/k_den");
  expect_path(R"({"terms":[{"re":"x","im":0,"p":0,"k_num":1,"k_den":1,"theta":0}]})", "/terms/0/re");
  expect_path(R"({"terms":[{"im":0,"p":0,"k_num":1,"k_den":1,"theta":0}]})", "/terms/0");
  expect_path(R"({"terms":{}})", "/terms");
  expect_path(R"({"terms":[{"re":1,"im":0,"p":-1,"k_num":0,"k_den":1,"theta":0}]})", "/terms/0/p");
}

TEST(FlatFnJson, SyntaxErrorsReportByteOffset) {
  try {
    parse_flatfn(R"({"terms": [ })");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 13u);
  }
  EXPECT_THROW(parse_json_text(""), ParseError);
}

TEST(ModeFnJson, RejectsDuplicateAndMalformedModes) {
  const std::string fn = R"({"terms":[{"re":1,"im":0,"p":0,"k_num":1,"k_den":1,"theta":0}]})";
  EXPECT_THROW(parse_modefn(R"({"modes":[{"n":1,"fn":)" + fn + R"(},{"n":1,"fn":)" + fn + R"(}],"note":""})"),
               ParseError);
  EXPECT_THROW(parse_modefn(R"({"modes":[{"n":1.5,"fn":)" + fn + R"(}],"note":""})"), ParseError);
  EXPECT_THROW(parse_modefn(R"({"modes":[{"fn":)" + fn + R"(}],"note":""})"), ParseError);
  EXPECT_EQ(parse_modefn(R"({"modes":[],"note":"zero"})").size(), 0u);
}

TEST(AtomicWrite, ReplacesWholeFile) {
  const fs::path d = scratch_dir("replace");
  const fs::path p = d / "out.json";
  write_file_atomic(p, "first");
  write_file_atomic(p, "second");
  std::ifstream in(p);
  std::string s((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(s, "second");
  EXPECT_FALSE(fs::exists(d / "out.json.tmp"));
}

TEST(AtomicWrite, MissingDirectoryLeavesNothing) {
  const fs::path d = scratch_dir("missing");
  EXPECT_THROW(write_file_atomic(d / "no" / "such" / "file", "x"), ValidationError);
  EXPECT_TRUE(fs::is_empty(d));
}

TEST(ReadJson, MissingFile) {
  EXPECT_THROW(read_json_file(scratch_dir("read") / "absent.json"), ValidationError);
}
