#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ctxlstm/checkpoint.hpp"
#include "ctxlstm/pipeline.hpp"
#include "json.hpp"

using namespace ctxlstm;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "ctxlstm_cli_test";

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the CLI with `args`, capturing stdout+stderr into `log`; returns the exit code.
int cli(const std::string& args, std::string* log = nullptr) {
  const fs::path out = kWork / "last.log";
  const std::string cmd = std::string("\"") + CTXLSTM_CLI + "\" " + args + " > \"" +
                          out.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  if (log) *log = slurp(out);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string p(const fs::path& path) { return "\"" + path.string() + "\""; }

const std::string kModel = " --embed-dim 4 --hidden-dim 6 --grid-side 4 --grid-cells 4";

void make_scenes() {
  static bool done = false;
  if (done) return;
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  std::ofstream(kWork / "synth.json")
      << R"({"agents": 8, "total_steps": 500, "dwell_steps": 40, "spawn_interval": 20})";
  for (const char* id : {"alpha", "beta"}) {
    const int rc = cli("synth --config " + p(kWork / "synth.json") + " --id " + id +
                       " --seed " + (std::string(id) == "alpha" ? "1" : "2") + " --out " +
                       p(kWork / "scenes"));
    REQUIRE(rc == 0);
  }
  done = true;
}

}  // namespace

TEST_CASE("synth writes trajectories, a scene and a manifest") {
  make_scenes();
  CHECK(fs::exists(kWork / "scenes/alpha.tsv"));
  CHECK(fs::exists(kWork / "scenes/alpha.scene.tsv"));
  const auto manifest = nlohmann::json::parse(slurp(kWork / "scenes/manifest.json"));
  CHECK(manifest.at("command") == "synth");
  CHECK(manifest.at("seed") == 2);
  CHECK(manifest.at("outputs").size() == 2);
  CHECK(manifest.at("inputs")[0].at("fnv1a64").get<std::string>().size() == 16);
  CHECK(manifest.at("config").at("agents") == 8);
}

TEST_CASE("prepare, train, evaluate and plot") {
  make_scenes();
  const auto scenes = kWork / "scenes";
  const auto folds = kWork / "folds.json";
  std::string log;
  REQUIRE(cli("prepare --data " + p(scenes / "alpha.tsv") + " --scene " +
                  p(scenes / "alpha.scene.tsv") + " --data " + p(scenes / "beta.tsv") +
                  " --scene " + p(scenes / "beta.scene.tsv") +
                  " --k 2 --subsample 5 --out " + p(folds),
              &log) == 0);
  CHECK(log.find("alpha:") != std::string::npos);
  const auto m = load_folds(folds);
  REQUIRE(m.folds.size() == 2);
  CHECK(m.prep.subsample_stride == 5);
  CHECK(fs::exists(kWork / "folds.json.manifest.json"));

  // Zero epochs writes the seeded initialization.
  REQUIRE(cli("train --variant ca-o-lstm --folds " + p(folds) + " --fold 0 --epochs 0 --seed 3" +
              kModel + " --out " + p(kWork / "train0")) == 0);
  const auto ck = load_checkpoint(kWork / "train0/checkpoint.json");
  HyperParams hp;
  hp.embed_dim = 4;
  hp.hidden_dim = 6;
  hp.grid = GridSpec{4.0, 4};
  hp.static_points = 3;
  CHECK(ck.params.weights ==
        Parameters::initialize(ModelVariant::parse("ca-o-lstm"), hp, 3).weights);
  CHECK(slurp(kWork / "train0/loss.csv") == "epoch,mean_nll\n");

  REQUIRE(cli("train --variant lstm --data " + p(scenes / "alpha.tsv") + " --scene " +
              p(scenes / "alpha.scene.tsv") + " --subsample 5 --epochs 1" + kModel + " --out " +
              p(kWork / "train1")) == 0);
  CHECK(slurp(kWork / "train1/loss.csv").rfind("epoch,mean_nll\n1,", 0) == 0);

  // Closed-loop training feeds back predictions, so the loss differs.
  REQUIRE(cli("train --variant lstm --data " + p(scenes / "alpha.tsv") + " --scene " +
              p(scenes / "alpha.scene.tsv") + " --subsample 5 --epochs 1 --closed-loop" + kModel +
              " --out " + p(kWork / "train2")) == 0);
  CHECK(slurp(kWork / "train2/loss.csv").rfind("epoch,mean_nll\n1,", 0) == 0);
  CHECK(slurp(kWork / "train2/loss.csv") != slurp(kWork / "train1/loss.csv"));
  const auto cl = nlohmann::json::parse(slurp(kWork / "train2/manifest.json"));
  CHECK(cl["config"]["training"]["closed_loop"] == true);

  const auto eval = kWork / "eval";
  REQUIRE(cli("evaluate --variant lstm --variant ca-lstm --baseline --folds " + p(folds) +
                  " --epochs 1" + kModel + " --out " + p(eval),
              &log) == 0);
  std::istringstream summary(slurp(eval / "summary.csv"));
  std::string line;
  std::getline(summary, line);
  CHECK(line == "variant,fold,sequence,ade_m");
  int fold_rows = 0, avg_rows = 0;
  while (std::getline(summary, line)) {
    if (line.find(",avg,all,") != std::string::npos) {
      ++avg_rows;
    } else {
      ++fold_rows;
    }
  }
  CHECK(fold_rows == 3 * 2);
  CHECK(avg_rows == 3);
  CHECK(fs::exists(eval / "ca-lstm/fold1/checkpoint.json"));
  CHECK(log.find("variant,alpha,beta,avg") != std::string::npos);

  std::ifstream rin(eval / "results.csv");
  const auto rows = read_results(rin);
  CHECK(!rows.empty());

  REQUIRE(cli("evaluate --checkpoint " + p(kWork / "train1/checkpoint.json") + " --data " +
              p(scenes / "beta.tsv") + " --scene " + p(scenes / "beta.scene.tsv") +
              " --subsample 5 --out " + p(kWork / "eval_ck")) == 0);
  CHECK(slurp(kWork / "eval_ck/summary.csv").find("lstm,0,beta,") != std::string::npos);

  REQUIRE(cli("plot --results " + p(eval / "results.csv") + " --scene " +
              p(scenes / "alpha.scene.tsv") + " --max-windows 3 --out " + p(kWork / "plots")) ==
          0);
  int svgs = 0;
  for (const auto& e : fs::directory_iterator(kWork / "plots")) {
    if (e.path().extension() != ".svg") continue;
    ++svgs;
    const auto text = slurp(e.path());
    CHECK(text.rfind("<svg", 0) == 0);
    CHECK(text.find("</svg>") != std::string::npos);
    CHECK(text.find("<polyline") != std::string::npos);
  }
  CHECK(svgs >= 1);
  CHECK(svgs <= 3);
}

TEST_CASE("errors are reported with a nonzero exit") {
  fs::create_directories(kWork);
  std::ofstream(kWork / "bad.json") << R"({"agnets": 3})";
  std::string log;
  CHECK(cli("synth --config " + p(kWork / "bad.json") + " --out " + p(kWork / "bad"), &log) == 2);
  CHECK(log.find("agnets") != std::string::npos);

  std::ofstream(kWork / "neg.json") << R"({"preferred_speed": -1})";
  CHECK(cli("synth --config " + p(kWork / "neg.json") + " --out " + p(kWork / "bad"), &log) == 2);
  CHECK(log.find("preferred_speed") != std::string::npos);

  CHECK(cli("synth --out " + p(kWork / "bad") + " --bogus-flag 1", &log) != 0);

  std::ofstream(kWork / "broken.tsv") << "0\t1\t0\t0\n0\t1\t1\t1\n";
  std::ofstream(kWork / "broken.scene.tsv") << "a\t0\t0\n";
  CHECK(cli("train --variant gru --data " + p(kWork / "broken.tsv") + " --scene " +
                p(kWork / "broken.scene.tsv") + " --out " + p(kWork / "bad"),
            &log) == 2);
  CHECK(log.find("gru") != std::string::npos);
  CHECK(cli("prepare --data " + p(kWork / "broken.tsv") + " --data " + p(kWork / "broken.tsv") +
                " --scene " + p(kWork / "broken.scene.tsv") + " --scene " +
                p(kWork / "broken.scene.tsv") + " --out " + p(kWork / "bad.json"),
            &log) == 2);  // duplicate scene ids
  fs::copy_file(kWork / "broken.tsv", kWork / "other.tsv", fs::copy_options::overwrite_existing);
  CHECK(cli("prepare --data " + p(kWork / "broken.tsv") + " --data " + p(kWork / "other.tsv") +
                " --scene " + p(kWork / "broken.scene.tsv") + " --scene " +
                p(kWork / "broken.scene.tsv") + " --out " + p(kWork / "f.json"),
            &log) == 3);
  CHECK(log.find("line 2") != std::string::npos);
}
