#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "io/container.hpp"
#include "io/pnm.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const TempDir& dir, const std::string& args) {
  const fs::path out = dir.path / "stdout.txt";
  const fs::path err = dir.path / "stderr.txt";
  const std::string cmd = std::string(ADVPAINT_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

}  // namespace

TEST_CASE("cli usage errors") {
  const TempDir dir("cli_usage");
  CHECK(cli(dir, "").code == 1);
  Run r = cli(dir, "frobnicate");
  CHECK(r.code == 1);
  CHECK(r.out.empty());
  r = cli(dir, "gradcheck --bogus 3");
  CHECK(r.code == 1);
  CHECK(r.err.find("--bogus") != std::string::npos);
  CHECK(cli(dir, "gradcheck --eps 1").code == 1);

  r = cli(dir, "protect --help");
  CHECK(r.code == 0);
  for (const char* needle : {"0.06", "0.03", "250", "1.2"}) CHECK(r.out.find(needle) != std::string::npos);
  r = cli(dir, "inpaint --help");
  CHECK(r.out.find("7.5") != std::string::npos);
  CHECK(r.out.find("50") != std::string::npos);
}

TEST_CASE("cli gradcheck") {
  const TempDir dir("cli_gc");
  const Run r = cli(dir, "gradcheck --seed 7 --eps 1e-5");
  CHECK(r.code == 0);
  CHECK(r.out.empty());
  const auto pos = r.err.find("max relative error ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(r.err.substr(pos + 19)) <= 1e-6);
}

TEST_CASE("cli pipeline") {
  const TempDir dir("cli_pipe");
  const fs::path d = dir.path;
  const std::string data = (d / "data").string();
  REQUIRE(cli(dir, "dataset gen --out " + data + " --count 3 --seed 2 --size 16").code == 0);
  const std::string ck = (d / "ck.bin").string();
  Run r = cli(dir, "train --data " + data + " --out " + ck + " --steps 3 --batch-size 2 --model toy --seed 1");
  REQUIRE(r.code == 0);
  CHECK(r.out.empty());

  const std::string img = (d / "data" / "00000.ppm").string();
  const std::string mask = (d / "data" / "00000.mask.pgm").string();
  const std::string adv = (d / "adv.ppm").string();
  const std::string delta = (d / "delta.bin").string();

  r = cli(dir, "protect --ckpt " + ck + " --image " + img + " --stages two --iters 2 --out " + adv);
  CHECK(r.code == 1);
  CHECK(!fs::exists(adv));

  r = cli(dir, "protect --ckpt " + ck + " --image " + img + " --box 3,3,9,9 --iters 2 --seed 4 --out " + adv +
                   " --delta " + delta);
  REQUIRE(r.code == 0);
  CHECK(r.out.empty());
  const auto entries = advpaint::read_container_file(delta);
  CHECK(advpaint::max_abs(advpaint::find_entry(entries, "delta").to_tensor()) <= 0.06);

  r = cli(dir, "protect --ckpt " + ck + " --image " + img + " --stages single --iters 1 --out " + (d / "s.ppm").string());
  CHECK(r.code == 0);

  const std::string cfg = (d / "run.json").string();
  std::ofstream(cfg) << R"({"attack": {"iters": 1, "eta": 0.02}})";
  r = cli(dir, "protect --config " + cfg + " --eta 0.04 --ckpt " + ck + " --image " + img +
                   " --box 3,3,9,9 --out " + (d / "c.ppm").string() + " --delta " + (d / "c.bin").string());
  REQUIRE(r.code == 0);
  const auto c_entries = advpaint::read_container_file(d / "c.bin");
  const double c_max = advpaint::max_abs(advpaint::find_entry(c_entries, "delta").to_tensor());
  CHECK(c_max > 0.02);
  CHECK(c_max <= 0.04);
  std::ofstream(cfg) << R"({"attack": {"iterations": 1}})";
  CHECK(cli(dir, "protect --config " + cfg + " --ckpt " + ck + " --image " + img + " --box 3,3,9,9 --out " +
                     (d / "c.ppm").string()).code == 1);

  const std::string o1 = (d / "o1.ppm").string(), o2 = (d / "o2.ppm").string();
  const std::string common = "inpaint --ckpt " + ck + " --image " + adv + " --mask " + mask +
                             " --prompt 1,4 --steps 4 --guidance 2 --seed 9 --out ";
  REQUIRE(cli(dir, common + o1).code == 0);
  REQUIRE(cli(dir, common + o2).code == 0);
  CHECK(slurp(o1) == slurp(o2));
  CHECK(slurp(o1).size() > 0);
  CHECK(cli(dir, "inpaint --ckpt " + ck + " --image " + adv + " --mask " + mask + " --steps 7 --out " + o1).code == 1);

  const std::string heat = (d / "heat.pgm").string();
  REQUIRE(cli(dir, "attmap --ckpt " + ck + " --image " + img + " --mask " + mask + " --layer 2 --out " + heat).code == 0);
  CHECK(advpaint::pgm_read(heat).shape() == advpaint::Shape{1, 16, 16});

  const std::string shifted = (d / "shift.pgm").string();
  const std::string label = (d / "label.txt").string();
  REQUIRE(cli(dir, "shiftmask --mask " + mask + " --box 2,2,14,14 --seed 3 --max-shift 2 --out " + shifted +
                       " --label " + label).code == 0);
  const std::string lab = slurp(label);
  CHECK((lab == "in\n" || lab == "out\n"));

  const std::string plan = (d / "plan.json").string();
  std::ofstream(plan) << nlohmann::json{{"dataset", "data"},
                                        {"count", 1},
                                        {"masks", {"bbox"}},
                                        {"objectives", {"attn", "random"}},
                                        {"attack", {{"iters", 1}}},
                                        {"sampler", {{"inference_steps", 2}}}}
                             .dump();
  REQUIRE(cli(dir, "evaluate --ckpt " + ck + " --plan " + plan + " --out-dir " + (d / "r1").string()).code == 0);
  REQUIRE(cli(dir, "evaluate --ckpt " + ck + " --plan " + plan + " --out-dir " + (d / "r2").string()).code == 0);
  CHECK(slurp(d / "r1" / "rows.csv") == slurp(d / "r2" / "rows.csv"));
  CHECK(slurp(d / "r1" / "summary.json") == slurp(d / "r2" / "summary.json"));
  std::ofstream(plan) << R"({"dataset": "data", "unknown": 1})";
  CHECK(cli(dir, "evaluate --ckpt " + ck + " --plan " + plan + " --out-dir " + (d / "r3").string()).code == 1);

  CHECK(cli(dir, "inpaint --ckpt " + img + " --image " + adv + " --mask " + mask + " --out " + o1).code == 2);
}
