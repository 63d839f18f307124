#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "cgat/dataset.hpp"
#include "cgat/hashmodel.hpp"

using namespace cgat;

namespace {

GenSpec small_spec() {
  GenSpec s;
  s.train_count = 60;
  s.database_count = 120;
  s.query_count = 20;
  s.dim = 9;
  s.classes = 11;  // two label bytes per row
  return s;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("cgat_test_" + name);
}

}  // namespace

TEST(Generate, DefaultSpecShapeAndInvariants) {
  auto ds = generate(GenSpec{});
  EXPECT_EQ(ds.size(), 4200u);
  EXPECT_EQ(ds.count(kTrain), 2000u);
  EXPECT_EQ(ds.count(kDatabase), 4000u);
  EXPECT_EQ(ds.count(kQuery), 200u);
  EXPECT_NO_THROW(ds.validate());
}

TEST(Generate, DeterministicPerSeed) {
  auto a = serialize_dataset(generate(small_spec()));
  EXPECT_EQ(serialize_dataset(generate(small_spec())), a);
  auto other = small_spec();
  other.seed = 8;
  EXPECT_NE(serialize_dataset(generate(other)), a);
}

TEST(Generate, NoiselessSingleLabelSamplesCoincidePerClass) {
  auto s = small_spec();
  s.noise = 0.0;
  s.multi_label_prob = 0.0;
  auto ds = generate(s);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(ds.labels[i].count(), 1u);
    for (std::size_t j = i + 1; j < ds.size(); ++j) {
      if (ds.labels[i] == ds.labels[j]) {
        ASSERT_TRUE(std::equal(ds.row(i).begin(), ds.row(i).end(), ds.row(j).begin()));
      }
    }
  }
}

TEST(Generate, ClassMeansRecoverPrototypes) {
  GenSpec s;
  s.multi_label_prob = 0.0;
  std::vector<double> protos;
  auto ds = generate(s, &protos);
  std::vector<double> sum(s.classes * s.dim, 0.0);
  std::vector<std::size_t> count(s.classes, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::size_t c = 0;
    while (!ds.labels[i].test(c)) ++c;
    ++count[c];
    for (std::size_t j = 0; j < s.dim; ++j) sum[c * s.dim + j] += ds.row(i)[j];
  }
  // Per-coordinate z-scores of the class means: about 0.27% of coordinates
  // fall outside 3 sigma by chance.
  const double sigma = s.contrast * s.noise;
  std::size_t within3 = 0, total = 0;
  for (std::size_t c = 0; c < s.classes; ++c) {
    ASSERT_GT(count[c], 0u);
    const double se = sigma / std::sqrt(static_cast<double>(count[c]));
    for (std::size_t j = 0; j < s.dim; ++j) {
      const double expect = 0.5 + s.contrast * (protos[c * s.dim + j] - 0.5);
      const double err = std::abs(sum[c * s.dim + j] / count[c] - expect);
      EXPECT_LE(err, 5.0 * se) << "class " << c << " dim " << j;
      within3 += err <= 3.0 * se;
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(within3), 0.99 * static_cast<double>(total));
  for (double p : protos) {
    EXPECT_GE(p, 0.2);
    EXPECT_LE(p, 0.8);
  }
}

TEST(Generate, MultiLabelProbabilityZeroGivesOneClass) {
  auto s = small_spec();
  s.multi_label_prob = 0.0;
  for (const auto& l : generate(s).labels) EXPECT_EQ(l.count(), 1u);
  s.multi_label_prob = 1.0;
  for (const auto& l : generate(s).labels) EXPECT_EQ(l.count(), 2u);
}

TEST(Generate, InvalidSpecsAreRejected) {
  auto s = small_spec();
  s.classes = 1;
  EXPECT_THROW(generate(s), DatasetError);
  s = small_spec();
  s.noise = -1.0;
  EXPECT_THROW(generate(s), DatasetError);
  s = small_spec();
  s.query_count = 0;
  EXPECT_THROW(generate(s), DatasetError);
  s = small_spec();
  s.train_count = s.database_count + 1;
  EXPECT_THROW(generate(s), DatasetError);
}

TEST(Splits, QueryDisjointAndTrainInsideDatabase) {
  auto ds = generate(small_spec());
  for (auto s : ds.splits) {
    if (s & kQuery) {
      EXPECT_EQ(s & (kTrain | kDatabase), 0);
    }
    if (s & kTrain) {
      EXPECT_NE(s & kDatabase, 0);
    }
  }
  auto train = ds.gather(kTrain);
  EXPECT_EQ(train.size(), 60u);
  EXPECT_EQ(train.features.size(), 60u * 9);
  for (std::size_t r = 0; r < train.size(); ++r) {
    EXPECT_TRUE(std::equal(train.row(r).begin(), train.row(r).end(), ds.row(train.ids[r]).begin()));
  }
}

TEST(DatasetFile, RoundTripIsByteIdentical) {
  auto ds = generate(small_spec());
  auto path = temp_path("roundtrip.ds");
  save_dataset(ds, path);
  auto back = load_dataset(path);
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.splits, ds.splits);
  EXPECT_EQ(serialize_dataset(back), io::read_file(path));
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  std::filesystem::remove(path);
}

TEST(DatasetFile, CorruptionIsReportedNeverMisread) {
  const auto bytes = serialize_dataset(generate(small_spec()));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_dataset(bad_magic), io::FormatError);
  auto old_version = bytes;
  old_version[6] = '0';
  EXPECT_THROW(deserialize_dataset(old_version), io::VersionError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(deserialize_dataset(std::vector<char>(bytes.begin(), bytes.begin() + cut)), io::FormatError);
  }
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_dataset(trailing), io::FormatError);
  auto out_of_range = bytes;
  // First feature sits right after the 7-byte magic and six u64 header fields.
  const double big = 2.0;
  std::memcpy(out_of_range.data() + 7 + 48, &big, 8);
  EXPECT_THROW(deserialize_dataset(out_of_range), io::FormatError);
  auto bad_split = bytes;
  bad_split.back() = 0;
  EXPECT_THROW(deserialize_dataset(bad_split), io::FormatError);
  auto huge = bytes;
  huge[7 + 7] = 0x7F;  // N
  EXPECT_THROW(deserialize_dataset(huge), io::FormatError);
}

TEST(DatasetFile, MissingFileIsError) {
  EXPECT_THROW(load_dataset(temp_path("does_not_exist.ds")), std::runtime_error);
}

TEST(CheckpointFile, RoundTripIsByteIdentical) {
  auto model = HashModel::create({32, 64, 16}, 3);
  auto path = temp_path("roundtrip.ck");
  save_checkpoint(model, path);
  auto back = load_checkpoint(path);
  EXPECT_EQ(back, model);
  EXPECT_EQ(serialize_checkpoint(back), io::read_file(path));
  std::filesystem::remove(path);
}

TEST(CheckpointFile, CorruptionIsReportedNeverMisread) {
  const auto bytes = serialize_checkpoint(HashModel::create({4, 5, 3}, 1));
  auto bad_magic = bytes;
  bad_magic[2] = 'Z';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), io::FormatError);
  auto old_version = bytes;
  old_version[6] = '0';
  EXPECT_THROW(deserialize_checkpoint(old_version), io::VersionError);
  for (std::size_t cut = 0; cut < bytes.size(); cut += 7) {
    EXPECT_THROW(deserialize_checkpoint(std::vector<char>(bytes.begin(), bytes.begin() + cut)), io::FormatError);
  }
  auto trailing = bytes;
  trailing.push_back(1);
  EXPECT_THROW(deserialize_checkpoint(trailing), io::FormatError);
  auto wrong_k = bytes;
  wrong_k[7] = 9;
  EXPECT_THROW(deserialize_checkpoint(wrong_k), io::FormatError);
  auto nan = bytes;
  const double q = std::nan("");
  std::memcpy(nan.data() + nan.size() - 8, &q, 8);
  EXPECT_THROW(deserialize_checkpoint(nan), io::FormatError);
}

TEST(Io, LittleEndianEncoding) {
  io::ByteWriter w;
  w.u32(0x01020304);
  w.u64(5);
  const auto& d = w.data();
  EXPECT_EQ(d[0], 0x04);
  EXPECT_EQ(d[3], 0x01);
  io::ByteReader r(d);
  EXPECT_EQ(r.u32(), 0x01020304u);
  EXPECT_EQ(r.u64(), 5u);
  EXPECT_THROW(r.u8(), io::FormatError);
  EXPECT_EQ(io::format_double(0.1), "0.10000000000000001");
}
