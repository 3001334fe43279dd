#include <gtest/gtest.h>

#include <fstream>

#include "nltmo/checkpoint.hpp"
#include "nltmo/config.hpp"
#include "nltmo/error.hpp"
#include "nltmo/training.hpp"
#include "support.hpp"

using namespace nltmo;

namespace {

ModelBundle full_bundle() {
  ModelBundle b;
  b.tonemap = ToneMapModel::initialize(5, 4);
  b.fusion = FusionModel::initialize(6);
  return b;
}

void expect_same(const ModelBundle& a, const ModelBundle& b) {
  ASSERT_EQ(a.tonemap.has_value(), b.tonemap.has_value());
  ASSERT_EQ(a.fusion.has_value(), b.fusion.has_value());
  if (a.tonemap) {
    EXPECT_EQ(a.tonemap->levels, b.tonemap->levels);
    EXPECT_EQ(a.tonemap->band_config, b.tonemap->band_config);
    EXPECT_TRUE(a.tonemap->band == b.tonemap->band);
    EXPECT_TRUE(a.tonemap->low == b.tonemap->low);
  }
  if (a.fusion) {
    EXPECT_EQ(a.fusion->config, b.fusion->config);
    EXPECT_TRUE(a.fusion->params == b.fusion->params);
  }
}

// Recomputes the trailing checksum so structural corruption is reached.
void reseal(Bytes& b) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i + 8 < b.size(); ++i) {
    h ^= b[i];
    h *= 0x100000001b3ull;
  }
  for (int i = 0; i < 8; ++i) b[b.size() - 8 + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(h >> (8 * i));
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
  const ModelBundle b = full_bundle();
  expect_same(load_checkpoint(save_checkpoint(b)), b);

  ModelBundle only_fusion;
  only_fusion.fusion = FusionModel::initialize(9);
  expect_same(load_checkpoint(save_checkpoint(only_fusion)), only_fusion);

  ModelBundle only_tm;
  only_tm.tonemap = ToneMapModel::initialize(10);
  expect_same(load_checkpoint(save_checkpoint(only_tm)), only_tm);
}

TEST(Checkpoint, SerializationIsDeterministic) {
  EXPECT_EQ(save_checkpoint(full_bundle()), save_checkpoint(full_bundle()));
}

TEST(Checkpoint, HeaderLayout) {
  const Bytes b = save_checkpoint(full_bundle());
  ASSERT_GT(b.size(), 20u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 8), "NLTMOCKP");
  EXPECT_EQ(b[8], 1);   // version
  EXPECT_EQ(b[12], 4);  // levels
  EXPECT_EQ(b[16], 3);  // networks
}

TEST(Checkpoint, RejectsCorruption) {
  const Bytes good = save_checkpoint(full_bundle());
  EXPECT_THROW(load_checkpoint(Bytes{}), CheckpointError);
  EXPECT_THROW(load_checkpoint(Bytes(good.begin(), good.begin() + 40)), CheckpointError);

  Bytes magic = good;
  magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(magic), CheckpointError);

  Bytes flipped = good;
  flipped[flipped.size() / 2] ^= 0x10;
  EXPECT_THROW(load_checkpoint(flipped), CheckpointError);

  Bytes version = good;
  version[8] = 2;
  reseal(version);
  EXPECT_THROW(load_checkpoint(version), CheckpointError);

  Bytes levels = good;
  levels[12] = 9;
  reseal(levels);
  EXPECT_THROW(load_checkpoint(levels), CheckpointError);

  Bytes count = good;
  count[16] = 4;
  reseal(count);
  EXPECT_THROW(load_checkpoint(count), CheckpointError);

  Bytes trailing = good;
  trailing.insert(trailing.end() - 8, 0);
  reseal(trailing);
  EXPECT_THROW(load_checkpoint(trailing), CheckpointError);
}

TEST(Checkpoint, FileAndManifest) {
  const auto dir = test::scratch_dir("checkpoint");
  const ModelBundle b = full_bundle();
  save_checkpoint_file(dir / "m.ckpt", b);
  expect_same(load_checkpoint_file(dir / "m.ckpt"), b);
  const KeyValueConfig manifest = KeyValueConfig::load(dir / "m.ckpt.txt");
  EXPECT_EQ(manifest.get_string("format", ""), "NLTMOCKP");
  EXPECT_EQ(manifest.get_int("tonemap.levels", 0), 4);
  EXPECT_TRUE(manifest.has("fusion.parameters"));
  EXPECT_THROW(load_checkpoint_file(dir / "missing.ckpt"), CheckpointError);
}

TEST(KeyValueConfig, ParsesCommentsAndWhitespace) {
  const auto kv = KeyValueConfig::parse("# header\n\n  lr = 0.5 \r\nname=a=b\nlist = 1, 2 ,3\n");
  EXPECT_DOUBLE_EQ(kv.get_double("lr", 0.0), 0.5);
  EXPECT_EQ(kv.get_string("name", ""), "a=b");
  EXPECT_EQ(kv.get_doubles("list", {}), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(kv.get_int("absent", 7), 7);
  EXPECT_EQ(KeyValueConfig::parse(kv.serialize()).entries(), kv.entries());
}

TEST(KeyValueConfig, Errors) {
  EXPECT_THROW(KeyValueConfig::parse("novalue\n"), FormatError);
  EXPECT_THROW(KeyValueConfig::parse(" = 3\n"), FormatError);
  const auto kv = KeyValueConfig::parse("a=1.5x\nb=2.5\n");
  EXPECT_THROW(kv.get_double("a", 0.0), FormatError);
  EXPECT_THROW(kv.get_int("b", 0), FormatError);
  EXPECT_THROW(kv.require_known({"a"}), FormatError);
  EXPECT_NO_THROW(kv.require_known({"a", "b"}));
}

TEST(KeyValueConfig, MergeOverrides) {
  auto base = KeyValueConfig::parse("a=1\nb=2\n");
  base.merge(KeyValueConfig::parse("b=3\nc=4\n"));
  EXPECT_EQ(base.get_int("a", 0), 1);
  EXPECT_EQ(base.get_int("b", 0), 3);
  EXPECT_EQ(base.get_int("c", 0), 4);
}

TEST(TrainConfig, DefaultsAndPrecedence) {
  const TrainConfig d;
  EXPECT_DOUBLE_EQ(d.lr, 1e-3);
  EXPECT_EQ(d.batch_size, 4);
  EXPECT_EQ(d.crop_size, 128);
  EXPECT_EQ(d.levels, 5);
  EXPECT_EQ(d.smax_choices, (std::vector<double>{1e3, 1e4, 1e5, 1e6, 1e7}));
  EXPECT_EQ(fusion_defaults().batch_size, 1);

  // defaults < file < flags
  auto kv = KeyValueConfig::parse("lr=0.01\nepochs=7\n");
  kv.merge(KeyValueConfig::parse("epochs=9\n"));
  const TrainConfig c = TrainConfig::from_config(kv, fusion_defaults());
  EXPECT_DOUBLE_EQ(c.lr, 0.01);
  EXPECT_EQ(c.epochs, 9);
  EXPECT_EQ(c.batch_size, 1);

  const TrainConfig back = TrainConfig::from_config(c.to_config());
  EXPECT_EQ(back.to_config().entries(), c.to_config().entries());
}

TEST(TrainConfig, LearningRateSchedule) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(c.lr_at_epoch(0), 1e-3);
  EXPECT_DOUBLE_EQ(c.lr_at_epoch(199), 1e-3);
  EXPECT_NEAR(c.lr_at_epoch(200), 1e-4, 1e-18);
  EXPECT_NEAR(c.lr_at_epoch(450), 1e-5, 1e-18);
}

TEST(TrainConfig, RejectsInvalidValues) {
  EXPECT_THROW(TrainConfig::from_config(KeyValueConfig::parse("bogus=1\n")), FormatError);
  EXPECT_THROW(TrainConfig::from_config(KeyValueConfig::parse("lr=-1\n")), Error);
  EXPECT_THROW(TrainConfig::from_config(KeyValueConfig::parse("smax_choices=1e4,1e3\n")), Error);
  EXPECT_THROW(TrainConfig::from_config(KeyValueConfig::parse("levels=7\n")), Error);
  EXPECT_THROW(TrainConfig::from_config(KeyValueConfig::parse("crop_size=4\n")), Error);
}
