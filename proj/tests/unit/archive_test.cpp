#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "avae/archive.hpp"
#include "avae/errors.hpp"

using namespace avae;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  fs::path dir = fs::path(AVAE_TEST_TMP) / "archive_test";
  fs::create_directories(dir);
  return dir / name;
}
}  // namespace

TEST(Archive, RoundTripIsBitwise) {
  Archive a;
  a.meta["config"] = "lr = 0.001 with spaces";
  a.meta["epoch"] = "7";
  a.put("w", Tensor({2, 3}, {1.0, -0.0, 1e-300, 3.5, -2.25, 1.0 / 3.0}));
  a.put("s", Tensor::scalar(42.0));
  a.put("empty", Tensor(Shape{0}));
  const auto base = scratch("roundtrip");
  write_archive(base, a);
  ASSERT_TRUE(archive_exists(base));

  const Archive b = read_archive(base);
  EXPECT_EQ(b.meta, a.meta);
  ASSERT_EQ(b.tensors.size(), 3u);
  EXPECT_EQ(b.tensor("w").shape(), (Shape{2, 3}));
  EXPECT_TRUE(bitwise_equal(b.tensor("w"), a.tensor("w")));
  EXPECT_EQ(b.tensor("s").rank(), 0u);
  EXPECT_EQ(b.tensor("s").item(), 42.0);
  EXPECT_EQ(b.tensor("empty").size(), 0u);
  EXPECT_FALSE(b.has_tensor("missing"));
}

TEST(Archive, MissingFilesAreIoErrors) {
  EXPECT_FALSE(archive_exists(scratch("absent")));
  EXPECT_THROW(read_archive(scratch("absent")), IoError);
}

TEST(Archive, BadHeaderNamesLine) {
  const auto base = scratch("bad");
  Archive a;
  a.put("x", Tensor::vector({1, 2}));
  write_archive(base, a);
  {
    std::ofstream hdr(archive_header_path(base), std::ios::app);
    hdr << "bogus record\n";
  }
  try {
    read_archive(base);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.hdr:3"), std::string::npos) << e.what();
  }
}

TEST(Archive, TruncatedPayloadRejected) {
  const auto base = scratch("trunc");
  Archive a;
  a.put("x", Tensor::vector({1, 2, 3, 4}));
  write_archive(base, a);
  fs::resize_file(archive_data_path(base), 3 * sizeof(double));
  EXPECT_THROW(read_archive(base), FormatError);
}
