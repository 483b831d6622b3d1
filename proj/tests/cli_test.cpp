#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace relabel;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

void write_uniform_store(const std::filesystem::path& path) {
  const DenseLabelMap d(3, 3, 4, std::vector<double>(36, 0.25), ValueMode::Probabilities);
  write_store({{"img", encode_sparse(d, 4, QuantFormat::F32)}}, path);
}

}  // namespace

TEST(Cli, StorageCost) {
  const auto r = run_cli({"storage-cost", "--images", "1280000", "--h", "15", "--w", "15", "--classes", "1000",
                          "--layout", "dense", "--quant", "f32"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("1152000000000 bytes\n", 0), 0u);
  EXPECT_NE(r.out.find("total_bytes=1152000000000\n"), std::string::npos);
  const auto s = run_cli({"storage-cost", "--images", "1280000", "--h", "15", "--w", "15", "--topk", "5", "--layout",
                          "sparse", "--quant", "f16"});
  EXPECT_EQ(s.code, 0);
  EXPECT_EQ(s.out.rfind("5760000000 bytes\n", 0), 0u);
  EXPECT_EQ(run_cli({"storage-cost", "--images", "1", "--h", "1", "--w", "1", "--layout", "diagonal"}).code, 1);
}

TEST(Cli, PoolOnUniformStore) {
  TempDir dir;
  write_uniform_store(dir / "u.rlbl");
  const auto r = run_cli({"pool", "--store", (dir / "u.rlbl").string(), "--id", "img", "--region", "0,0,1,1"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "class_index,probability\n0,0.25\n1,0.25\n2,0.25\n3,0.25\n");
  const auto single = run_cli({"pool", "--store", (dir / "u.rlbl").string(), "--id", "img", "--region",
                               "0.2,0.2,0.5,0.5", "--variant", "loc_single"});
  EXPECT_EQ(single.out, "class_index,probability\n0,1\n");
  EXPECT_EQ(run_cli({"pool", "--store", (dir / "u.rlbl").string(), "--id", "nope", "--region", "0,0,1,1"}).code, 2);
}

TEST(Cli, ErrorsAndExitCodes) {
  TempDir dir;
  const auto missing = run_cli({"inspect", "--store", (dir / "absent.rlbl").string()});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("FormatError"), std::string::npos);
  EXPECT_EQ(count_lines(missing.err), 1u);

  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
  EXPECT_EQ(run_cli({"simulate-crops", "--samples", "3"}).code, 1);  // seed is required
  EXPECT_EQ(run_cli({"simulate-crops", "--seed", "1", "--bogus"}).code, 1);
  EXPECT_EQ(run_cli({"simulate-crops", "--seed", "x"}).code, 1);
  EXPECT_EQ(run_cli({"simulate-crops", "--seed", "1", "--params", "area=2:3"}).code, 1);
  EXPECT_EQ(run_cli({"storage-cost", "--images", "1", "--h", "1", "--w", "1", "--quant", "f12"}).code, 1);
  write_uniform_store(dir / "u.rlbl");
  EXPECT_EQ(run_cli({"pool", "--store", (dir / "u.rlbl").string(), "--id", "img", "--region", "0,0,0,1"}).code, 1);
  EXPECT_EQ(run_cli({"pool", "--store", (dir / "u.rlbl").string(), "--id", "img", "--region", "0,0,1"}).code, 1);
  EXPECT_EQ(run_cli({"train-demo", "--mode", "dance", "--seed", "1"}).code, 1);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({"pool", "--help"}).code, 0);
}

TEST(Cli, InspectDoesNotModifyStore) {
  TempDir dir;
  std::mt19937_64 gen(1);
  std::vector<std::pair<std::string, SparseLabelMap>> maps;
  for (int i = 0; i < 5; ++i) {
    maps.emplace_back("m" + std::to_string(i),
                      encode_sparse(DenseLabelMap(4, 5, 7, oracle::random_values(gen, 140)), 3, QuantFormat::F8));
  }
  const auto path = dir / "s.rlbl";
  write_store(maps, path);
  const auto before = read_bytes(path);
  const auto mtime = std::filesystem::last_write_time(path);
  const auto r = run_cli({"inspect", "--store", path.string(), "--ids"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(read_bytes(path), before);
  EXPECT_EQ(std::filesystem::last_write_time(path), mtime);
  EXPECT_NE(r.out.find("records=5\n"), std::string::npos);
  EXPECT_NE(r.out.find("quant=f8\n"), std::string::npos);
  EXPECT_NE(r.out.find("k=3\n"), std::string::npos);
  EXPECT_NE(r.out.find("id=m4 "), std::string::npos);
}

TEST(Cli, StochasticCommandsAreReproducibleAndReportSeed) {
  TempDir dir;
  {
    std::ofstream boxes(dir / "boxes.csv");
    boxes << "image_id,x0,y0,x1,y1\nimg,0.1,0.1,0.6,0.7\nimg,0.5,0.5,0.9,0.9\n";
  }
  write_uniform_store(dir / "u.rlbl");
  const std::vector<std::vector<std::string>> commands = {
      {"simulate-crops", "--seed", "11", "--samples", "50"},
      {"crop-stats", "--seed", "11", "--boxes", (dir / "boxes.csv").string(), "--crops-per-image", "300"},
      {"confidence", "--seed", "11", "--boxes", (dir / "boxes.csv").string(), "--store", (dir / "u.rlbl").string(),
       "--samples", "500"},
      {"train-demo", "--mode", "conflict", "--seed", "11", "--steps", "300"},
      {"train-demo", "--mode", "variants", "--seed", "11", "--steps", "300", "--scenes", "20"},
  };
  for (const auto& cmd : commands) {
    const auto a = run_cli(cmd);
    const auto b = run_cli(cmd);
    EXPECT_EQ(a.code, 0) << cmd[0] << ": " << a.err;
    EXPECT_EQ(a.out, b.out) << cmd[0];
    EXPECT_NE(a.err.find("seed=11\n"), std::string::npos) << cmd[0];
  }
  // with --out the seed goes to stdout and the file holds the CSV
  const auto f = run_cli({"simulate-crops", "--seed", "11", "--samples", "50", "--out", (dir / "c.csv").string()});
  EXPECT_EQ(f.out, "seed=11\n");
  std::ifstream in(dir / "c.csv");
  const std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(file, run_cli(commands[0]).out);
  EXPECT_EQ(count_lines(file), 51u);
}

TEST(Cli, TrainDemoConflictOutput) {
  const auto r = run_cli({"train-demo", "--mode", "conflict", "--seed", "0"});
  EXPECT_EQ(r.code, 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "case,class,target,probability");
  int rows = 0;
  while (std::getline(in, line)) {
    const auto f = split_fields(line);
    ASSERT_EQ(f.size(), 4u);
    const double target = std::stod(std::string(f[2]));
    const double prob = std::stod(std::string(f[3]));
    EXPECT_NEAR(prob, target, 2e-2) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 5);
}

TEST(Cli, ConfigFileSuppliesDefaultsAndFlagsWin) {
  TempDir dir;
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "# crop sampling\nsamples = 3\nparams=area=0.5:0.5,aspect=1:1\nunrelated=1\n";
  }
  const auto a = run_cli({"simulate-crops", "--seed", "2", "--config", (dir / "run.cfg").string()});
  EXPECT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(count_lines(a.out), 4u);
  EXPECT_NE(a.out.find(",0.5,0\n"), std::string::npos);  // area column
  const auto b = run_cli({"simulate-crops", "--seed", "2", "--samples", "6", "--config", (dir / "run.cfg").string()});
  EXPECT_EQ(count_lines(b.out), 7u);
  EXPECT_EQ(run_cli({"simulate-crops", "--seed", "2", "--config", (dir / "absent.cfg").string()}).code, 2);
}

TEST(Cli, AnnotateAndEncodeBuildStores) {
  TempDir dir;
  std::mt19937_64 gen(3);
  const std::size_t H = 4, W = 4, d = 6, C = 8;
  std::vector<NamedGrid> feats = {{"a", H, W, d, oracle::random_values(gen, H * W * d)},
                                  {"b", H, W, d, oracle::random_values(gen, H * W * d)}};
  write_grids(dir / "f.rlft", TensorFileKind::Features, feats);
  const ClassifierHead head(d, C, oracle::random_values(gen, d * C, -1, 1));
  write_head(dir / "h.rlft", head);
  const auto r = run_cli({"annotate", "--features", (dir / "f.rlft").string(), "--head", (dir / "h.rlft").string(),
                          "--out", (dir / "a.rlbl").string(), "--topk", "3", "--quant", "f16"});
  ASSERT_EQ(r.code, 0) << r.err;
  const LabelStore store = LabelStore::open(dir / "a.rlbl");
  EXPECT_EQ(store.size(), 2u);
  EXPECT_EQ(store.header().k, 3);
  EXPECT_EQ(store.header().classes, C);
  // the file holds single-precision features; the store matches that pipeline exactly
  const auto [kind, back] = read_grids(dir / "f.rlft");
  const auto read_back_head = read_head(dir / "h.rlft");
  EXPECT_EQ(store.get_map("b"), encode_sparse(fc_to_pointwise_conv(FeatureMap(H, W, d, back[1].values), read_back_head),
                                              3, QuantFormat::F16));

  std::vector<NamedGrid> maps = {{"m", H, W, C, oracle::random_values(gen, H * W * C)}};
  write_grids(dir / "m.rlft", TensorFileKind::LabelMaps, maps);
  const auto e = run_cli({"encode", "--maps", (dir / "m.rlft").string(), "--out", (dir / "m.rlbl").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(LabelStore::open(dir / "m.rlbl").header().k, 5);
  // feature file passed where label maps are expected
  EXPECT_EQ(run_cli({"encode", "--maps", (dir / "f.rlft").string(), "--out", (dir / "x.rlbl").string()}).code, 2);
  EXPECT_EQ(run_cli({"encode", "--maps", (dir / "m.rlft").string(), "--out", (dir / "x.rlbl").string(), "--topk",
                     "9"}).code,
            1);
}
