// Command-line entry point wiring training, embedding, combination, and
// evaluation into reproducible pipelines. All randomness flows from one root
// seed via named streams; outputs record the seed and a config hash.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "mtlsent/combiner.hpp"
#include "mtlsent/evalharness.hpp"
#include "mtlsent/multitask.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mtlsent;

namespace {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
}

void require_file(const json& cfg, const std::string& field, const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("field '" + field + "': no such file: " + path);
}

uint64_t config_hash(const json& cfg) {
  std::string s = cfg.dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<int> read_int_labels(const std::string& path) {
  std::vector<int> out;
  for (const auto& l : read_lines(path))
    if (!l.empty()) out.push_back(std::stoi(l));
  return out;
}

std::vector<double> read_scores(const std::string& path) {
  std::vector<double> out;
  for (const auto& l : read_lines(path))
    if (!l.empty()) out.push_back(std::stod(l));
  return out;
}

const std::map<std::string, std::pair<double, double>>& beta_gamma_presets() {
  static const std::map<std::string, std::pair<double, double>> presets = {
      {"qqp_snli", {0.01, 0.05}},
      {"snli_mnli", {0.005, 0.001}},
      {"qqp_allnli", {0.01, 0.05}},
      {"qqp_snli_mnli", {0.005, 0.001}},
  };
  return presets;
}

const std::vector<double>& beta_gamma_grid() {
  static const std::vector<double> grid = {0.001, 0.005, 0.01, 0.05, 0.1, 0.5};
  return grid;
}

// ---- train -----------------------------------------------------------------

struct TrainInputs {
  std::vector<TaskSpec> tasks;
  EmbeddingTable table;
  int embedding_dim = 0;
};

TrainInputs load_train_inputs(const json& cfg, uint64_t seed) {
  TrainInputs in;
  if (!cfg.contains("tasks") || cfg["tasks"].empty())
    throw ConfigError("field 'tasks': at least one task is required");

  bool synthetic = false;
  int num_tasks = static_cast<int>(cfg["tasks"].size());
  int max_classes = 2;
  for (const auto& t : cfg["tasks"]) {
    if (t.contains("synth")) {
      synthetic = true;
    } else {
      // dataset paths are checked up front so a typo is reported as the
      // offending field rather than a downstream failure
      for (const char* split : {"train", "dev", "test"}) {
        if (!t.contains(split))
          throw ConfigError("field 'tasks[]." + std::string(split) + "': missing path for task '" +
                            t.value("name", "?") + "'");
        require_file(t, std::string("tasks[].") + split, t.at(split).get<std::string>());
      }
    }
    max_classes = std::max(max_classes, t.value("num_classes", 2));
  }

  if (cfg.contains("word_vectors")) {
    const auto& wv = cfg["word_vectors"];
    std::string path = wv.at("path").get<std::string>();
    require_file(cfg, "word_vectors.path", path);
    in.table = load_word_vectors(path, wv.at("dim").get<int>()).table;
  } else if (synthetic) {
    const auto syn = cfg.value("synthetic", json::object());
    in.table = synth_embedding_table(derive_seed(seed, "synth-table"),
                                     syn.value("num_tasks", num_tasks),
                                     syn.value("num_classes", max_classes),
                                     syn.value("filler_tokens", 20),
                                     cfg.value("embedding_dim", 16));
  } else {
    throw ConfigError("field 'word_vectors': required unless all tasks are synthetic");
  }
  in.embedding_dim = in.table.dim();

  int task_idx = 0;
  for (const auto& t : cfg["tasks"]) {
    TaskSpec spec;
    spec.name = t.value("name", "task" + std::to_string(task_idx));
    std::string kind = t.value("kind", "single");
    if (kind == "single")
      spec.kind = Schema::Single;
    else if (kind == "pair")
      spec.kind = Schema::Pair;
    else
      throw ConfigError("field 'tasks[].kind': unknown kind '" + kind + "'");
    spec.num_classes = t.value("num_classes", 2);
    if (spec.num_classes < 2) throw ConfigError("field 'tasks[].num_classes': must be >= 2");

    if (t.contains("synth")) {
      const auto& s = t["synth"];
      SynthTaskSpec ss;
      ss.num_classes = spec.num_classes;
      ss.n = s.value("n", 1000);
      ss.shared_signal_weight = s.value("shared_signal_weight", 1.0);
      ss.private_signal_weight = s.value("private_signal_weight", 1.0);
      ss.task_id = s.value("task_id", task_idx);
      uint64_t tseed = s.value("seed", derive_seed(seed, "synth-" + spec.name));
      spec.train = synth_task(tseed, ss);
      ss.n = s.value("n_dev", std::max(1, ss.n / 5));
      spec.dev = synth_task(derive_seed(tseed, "dev"), ss);
      spec.test = synth_task(derive_seed(tseed, "test"), ss);
    } else {
      for (const char* split : {"train", "dev", "test"}) {
        if (!t.contains(split))
          throw ConfigError("field 'tasks[].mtl': task '" + spec.name + "' missing '" + split +
                            "' path");
        std::string path = t.at(split).get<std::string>();
        require_file(t, std::string("tasks[].") + split, path);
        auto recs = load_dataset(path, spec.kind);
        if (split == std::string("train"))
          spec.train = std::move(recs);
        else if (split == std::string("dev"))
          spec.dev = std::move(recs);
        else
          spec.test = std::move(recs);
      }
    }
    in.tasks.push_back(std::move(spec));
    ++task_idx;
  }
  return in;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, uint64_t seed_override,
              bool have_seed, const std::string& mode_flag, double beta_flag, double gamma_flag,
              const std::string& preset, int hidden_flag, int batch_flag) {
  json cfg = load_json(config_path);
  uint64_t seed = have_seed ? seed_override : cfg.value("seed", 0ull);

  TrainConfig tc;
  tc.seed = seed;
  tc.beta = cfg.value("beta", 0.0);
  tc.gamma = cfg.value("gamma", 0.0);
  tc.lr0 = cfg.value("lr0", 0.1);
  tc.lr_decay = cfg.value("lr_decay", 0.99);
  tc.lr_divisor = cfg.value("lr_divisor", 5.0);
  tc.stop_threshold = cfg.value("stop_threshold", 1e-5);
  tc.batch_size = cfg.value("batch_size", 128);
  tc.max_epochs = cfg.value("max_epochs", 50);
  tc.disc_extra_steps = cfg.value("disc_extra_steps", 0);
  tc.restore_best = cfg.value("restore_best", true);

  std::string mode = mode_flag.empty() ? cfg.value("mode", "sp") : mode_flag;
  if (mode == "sp")
    tc.mode = AdvMode::Off;
  else if (mode == "asp")
    tc.mode = AdvMode::Reversal;
  else if (mode == "asp_alternating")
    tc.mode = AdvMode::Alternating;
  else
    throw ConfigError("field 'mode': expected sp|asp|asp_alternating, got '" + mode + "'");

  std::string bg = preset.empty() ? cfg.value("beta_gamma_preset", "") : preset;
  if (!bg.empty()) {
    auto it = beta_gamma_presets().find(bg);
    if (it == beta_gamma_presets().end())
      throw ConfigError("field 'beta_gamma_preset': unknown preset '" + bg + "'");
    tc.beta = it->second.first;
    tc.gamma = it->second.second;
  }
  if (beta_flag >= 0) tc.beta = beta_flag;
  if (gamma_flag >= 0) tc.gamma = gamma_flag;
  if (tc.beta < 0 || tc.gamma < 0) throw ConfigError("field 'beta'/'gamma': must be >= 0");
  if (batch_flag > 0) tc.batch_size = batch_flag;

  int d = hidden_flag > 0 ? hidden_flag : cfg.value("hidden_dim", 2048);
  int mlp_hidden = cfg.value("mlp_hidden", 512);

  TrainInputs inputs = load_train_inputs(cfg, seed);

  fs::create_directories(out_dir);
  Rng init_rng(seed, "model-init");
  MtlModel model = MtlModel::init(inputs.tasks, d, inputs.embedding_dim, mlp_hidden, init_rng);
  TrainResult result = train(model, inputs.tasks, inputs.table, tc);

  // append-only JSON-lines training log
  {
    std::ofstream log(fs::path(out_dir) / "train_log.jsonl");
    for (const auto& ep : result.log) {
      json rec{{"epoch", ep.epoch},
               {"lr", ep.lr},
               {"task_train_loss", ep.task_train_loss},
               {"task_dev_acc", ep.task_dev_acc},
               {"mean_dev_acc", ep.mean_dev_acc},
               {"l_diff", ep.diff_loss_mean}};
      if (tc.mode != AdvMode::Off) rec["l_adv"] = ep.adv_loss_mean;
      log << rec.dump() << '\n';
    }
  }

  export_encoders(model, inputs.tasks, inputs.table, (fs::path(out_dir) / "encoders").string());

  json record{{"config_hash", config_hash(cfg)},
              {"seed", seed},
              {"mode", mode},
              {"beta", tc.beta},
              {"gamma", tc.gamma},
              {"hidden_dim", d},
              {"best_epoch", result.best_epoch},
              {"best_mean_dev_acc", result.best_mean_dev_acc}};
  std::ofstream rc(fs::path(out_dir) / "run_record.json");
  rc << record.dump(2) << '\n';
  std::cout << "trained " << inputs.tasks.size() << " task(s); best mean dev acc "
            << result.best_mean_dev_acc << " at epoch " << result.best_epoch << "\n";
  return 0;
}

// ---- embed / combine -------------------------------------------------------

int cmd_embed(const std::string& manifest, const std::string& corpus, const std::string& mode,
              const std::string& out) {
  if (!fs::exists(manifest)) throw ConfigError("field '--manifest': no such file: " + manifest);
  if (!fs::exists(corpus)) throw ConfigError("field '--corpus': no such file: " + corpus);
  EncoderBundle bundle = load_bundle(manifest);
  std::vector<std::string> sentences = read_lines(corpus);
  while (!sentences.empty() && sentences.back().empty()) sentences.pop_back();
  EmbeddingSet set = embed_corpus(bundle, sentences, mode);
  save_embedding_set(set, out);
  std::cout << "embedded " << set.n() << " sentences, dim " << set.dim() << ", provenance "
            << set.provenance << "\n";
  return 0;
}

int cmd_combine(const std::vector<std::string>& inputs, const std::string& out, bool l2) {
  std::vector<EmbeddingSet> sets;
  for (const auto& p : inputs) {
    if (!fs::exists(p)) throw ConfigError("field 'inputs': no such file: " + p);
    sets.push_back(load_embedding_set(p));
  }
  EmbeddingSet combined = combine(sets, l2);
  save_embedding_set(combined, out);
  std::cout << "combined dim " << combined.dim() << ", provenance " << combined.provenance << "\n";
  return 0;
}

// ---- eval ------------------------------------------------------------------

Mat load_split_embeddings(const json& split, const std::string& field, std::string* corpus_id) {
  std::string path = split.at("embeddings").get<std::string>();
  if (!fs::exists(path)) throw ConfigError("field '" + field + ".embeddings': no such file: " + path);
  EmbeddingSet set = load_embedding_set(path);
  if (corpus_id) *corpus_id = set.corpus_id;
  return set.matrix;
}

int cmd_eval(const std::string& config_path, const std::string& out) {
  json cfg = load_json(config_path);
  std::string kind = cfg.value("kind", "single");
  uint64_t seed = cfg.value("seed", 0ull);

  json report_json{{"task", cfg.value("task", "task")},
                   {"seed", seed},
                   {"config_hash", config_hash(cfg)}};

  if (kind == "similarity") {
    SimilarityData data;
    auto load_pair = [&](const char* split, Mat& x1, Mat& x2, std::vector<double>& gold,
                         bool required) {
      if (!cfg.contains(split)) {
        if (required) throw ConfigError(std::string("field '") + split + "': required");
        return;
      }
      const auto& s = cfg[split];
      x1 = load_split_embeddings(s, split, nullptr);
      std::string p2 = s.at("embeddings2").get<std::string>();
      if (!fs::exists(p2))
        throw ConfigError(std::string("field '") + split + ".embeddings2': no such file: " + p2);
      x2 = load_embedding_set(p2).matrix;
      gold = read_scores(s.at("gold").get<std::string>());
    };
    std::string simmode = cfg.value("similarity_mode", "cosine");
    load_pair("train", data.train_x1, data.train_x2, data.train_gold, simmode == "trained");
    load_pair("test", data.test_x1, data.test_x2, data.test_gold, true);
    EvalReport rep = similarity_eval(
        data, simmode == "trained" ? SimilarityMode::Trained : SimilarityMode::Cosine);
    report_json["metric"] = "pearson";
    report_json["test"] = rep.test_value;
  } else {
    FrozenTaskData data;
    auto load_split = [&](const char* split, Mat& x, std::vector<int>& y) {
      if (!cfg.contains(split)) throw ConfigError(std::string("field '") + split + "': required");
      const auto& s = cfg[split];
      x = load_split_embeddings(s, split, nullptr);
      if (kind == "pair") {
        std::string p2 = s.at("embeddings2").get<std::string>();
        if (!fs::exists(p2))
          throw ConfigError(std::string("field '") + split + ".embeddings2': no such file: " + p2);
        Mat x2 = load_embedding_set(p2).matrix;
        if (x2.rows() != x.rows())
          throw ConfigError(std::string("field '") + split + "': pair sets misaligned");
        Mat f(x.rows(), 4 * x.cols());
        f << x, x2, (x - x2), x.cwiseProduct(x2);
        x = std::move(f);
      }
      y = read_int_labels(s.at("labels").get<std::string>());
      if (static_cast<Eigen::Index>(y.size()) != x.rows())
        throw ConfigError(std::string("field '") + split + "': label count vs embedding rows");
    };
    load_split("train", data.train_x, data.train_y);
    load_split("dev", data.dev_x, data.dev_y);
    load_split("test", data.test_x, data.test_y);

    std::string clf = cfg.value("classifier", "logreg");
    EvalReport rep;
    if (clf == "mlp")
      rep = train_mlp_probe(data, cfg.value("mlp_hidden", 512), seed);
    else
      rep = train_logreg(data, seed, cfg.value("report_f1", false));
    report_json["metric"] = rep.metric;
    report_json["dev"] = rep.dev_value;
    report_json["test"] = rep.test_value;
    report_json["chosen_l2"] = rep.chosen_l2;
    if (rep.test_f1 >= 0) report_json["test_f1"] = rep.test_f1;
  }

  std::ofstream o(out);
  if (!o) throw DataError("cannot write report: " + out);
  o << report_json.dump(2) << '\n';
  std::cout << report_json.dump(2) << "\n";
  return 0;
}

// ---- probe / analyze / curve -----------------------------------------------

int cmd_probe(const std::vector<std::string>& train_caches,
              const std::vector<std::string>& test_caches, uint64_t seed,
              const std::string& out) {
  if (train_caches.size() != test_caches.size())
    throw ConfigError("field '--train/--test': need the same number of caches");
  std::vector<Mat> train_sets, test_sets;
  for (const auto& p : train_caches) {
    if (!fs::exists(p)) throw ConfigError("field '--train': no such file: " + p);
    train_sets.push_back(load_embedding_set(p).matrix);
  }
  for (const auto& p : test_caches) {
    if (!fs::exists(p)) throw ConfigError("field '--test': no such file: " + p);
    test_sets.push_back(load_embedding_set(p).matrix);
  }
  double acc = discriminator_probe(train_sets, test_sets, seed);
  json rep{{"probe", "task-identity"},
           {"num_tasks", train_sets.size()},
           {"chance", 1.0 / static_cast<double>(train_sets.size())},
           {"accuracy", acc},
           {"seed", seed}};
  if (!out.empty()) {
    std::ofstream o(out);
    o << rep.dump(2) << '\n';
  }
  std::cout << rep.dump(2) << "\n";
  return 0;
}

int cmd_analyze(const std::vector<std::string>& train_caches,
                const std::vector<std::string>& test_caches, const std::string& labels_path,
                const std::string& test_labels_path, std::vector<std::string> names,
                uint64_t seed, const std::string& out) {
  if (train_caches.size() != test_caches.size())
    throw ConfigError("field '--train/--test': need the same number of caches");
  std::vector<EmbeddingSet> sets;
  std::vector<Mat> test_sets;
  for (const auto& p : train_caches) {
    if (!fs::exists(p)) throw ConfigError("field '--train': no such file: " + p);
    sets.push_back(load_embedding_set(p));
  }
  for (const auto& p : test_caches) {
    if (!fs::exists(p)) throw ConfigError("field '--test': no such file: " + p);
    test_sets.push_back(load_embedding_set(p).matrix);
  }
  if (names.empty())
    for (const auto& s : sets) names.push_back(s.provenance);
  auto train_y = read_int_labels(labels_path);
  auto test_y = read_int_labels(test_labels_path);
  PoolAnalysisResult res = weighted_pool_analysis(sets, names, train_y, test_y, test_sets, seed);
  json alpha = json::object();
  for (size_t i = 0; i < res.alpha.size(); ++i) alpha[res.encoder_names[i]] = res.alpha[i];
  json rep{{"alpha", alpha}, {"accuracy", res.accuracy}, {"seed", seed}};
  if (!out.empty()) {
    std::ofstream o(out);
    o << rep.dump(2) << '\n';
  }
  std::cout << rep.dump(2) << "\n";
  return 0;
}

int cmd_curve(const std::string& train_cache, const std::string& train_labels,
              const std::string& dev_cache, const std::string& dev_labels,
              const std::string& test_cache, const std::string& test_labels,
              const std::vector<int>& sizes, uint64_t seed, const std::string& out) {
  for (const auto& p : {train_cache, dev_cache, test_cache})
    if (!fs::exists(p)) throw ConfigError("field '--embeddings': no such file: " + p);
  FrozenTaskData data;
  data.train_x = load_embedding_set(train_cache).matrix;
  data.dev_x = load_embedding_set(dev_cache).matrix;
  data.test_x = load_embedding_set(test_cache).matrix;
  data.train_y = read_int_labels(train_labels);
  data.dev_y = read_int_labels(dev_labels);
  data.test_y = read_int_labels(test_labels);
  auto curve = learning_curve(data, sizes, seed);
  std::ofstream o(out);
  if (!o) throw DataError("cannot write curve: " + out);
  o << "size,accuracy\n";
  for (const auto& pt : curve) o << pt.size << "," << pt.accuracy << "\n";
  std::cout << "wrote " << curve.size() << " curve points to " << out << "\n";
  return 0;
}

// ---- gradcheck -------------------------------------------------------------

int cmd_gradcheck(const std::string& scope, bool inject_fault) {
  Rng rng(99, "gradcheck");
  auto randmat = [&](int r, int c) {
    Mat m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-1, 1);
    return m;
  };
  bool ok = true;
  auto run = [&](const std::string& name, double err, double tol) {
    bool pass = err < tol;
    ok = ok && pass;
    std::cout << (pass ? "[pass] " : "[FAIL] ") << name << " max rel err " << err << " (tol "
              << tol << ")\n";
  };

  if (scope == "ops" || scope == "all") {
    Param a(randmat(3, 4)), b(randmat(4, 3)), v(randmat(5, 1));
    if (inject_fault) {
      // test fixture: deliberately wrong gradient rule for matmul
      auto bad_matmul = [](Var x, Var y) {
        Tape& t = *x.tape;
        Mat out = x.value() * y.value();
        int idx = x.id, idy = y.id;
        int id = t.push(std::move(out), [idx, idy](Tape& t, int self) {
          const Mat& g = t.grd(self);
          t.grd(idx) += g * t.val(idy).transpose() * 1.5;  // wrong scale
          t.grd(idy) += t.val(idx).transpose() * g;
        });
        return Var{&t, id};
      };
      run("matmul (fault injected)",
          grad_check([&](Tape& t) { return frobenius_sq(bad_matmul(t.param(a), t.param(b))); },
                     {&a, &b}),
          1e-4);
    } else {
      run("matmul",
          grad_check([&](Tape& t) { return frobenius_sq(matmul(t.param(a), t.param(b))); },
                     {&a, &b}),
          1e-4);
    }
    run("elementwise mul",
        grad_check([&](Tape& t) { Var x = t.param(a); return sum(mul(x, x)); }, {&a}), 1e-4);
    run("sigmoid/tanh",
        grad_check([&](Tape& t) { return sum(sigmoid(mtlsent::tanh(t.param(a)))); }, {&a}), 1e-4);
    run("softmax + cross entropy",
        grad_check([&](Tape& t) { return cross_entropy(softmax(t.param(v)), 1); }, {&v}), 1e-4);
    run("frobenius_sq", grad_check([&](Tape& t) { return frobenius_sq(t.param(a)); }, {&a}), 1e-4);
    run("concat/slice",
        grad_check(
            [&](Tape& t) {
              Var x = t.param(v);
              return frobenius_sq(concat_rows({slice_rows(x, 0, 3), slice_rows(x, 2, 3)}));
            },
            {&v}),
        1e-4);
  }

  if (scope == "encoder" || scope == "all") {
    EmbeddingTable table = synth_embedding_table(3, 2, 2, 10, 4);
    EncoderParams params = EncoderParams::init(4, 4, rng);
    SynthTaskSpec sspec;
    sspec.n = 2;
    sspec.max_len = 6;
    auto recs = synth_task(5, sspec);
    auto batches = make_batches(recs, 2, table.vocab);
    run("encode pipeline",
        grad_check(
            [&](Tape& t) { return sum(encode_batch(t, batches[0], table, params).pooled); },
            params.params()),
        1e-4);
  }

  if (scope == "mtl" || scope == "all") {
    EmbeddingTable table = synth_embedding_table(4, 2, 2, 10, 4);
    std::vector<TaskSpec> tasks;
    for (int k = 0; k < 2; ++k) {
      SynthTaskSpec sspec;
      sspec.n = 3;
      sspec.task_id = k;
      TaskSpec ts;
      ts.name = "t" + std::to_string(k);
      ts.kind = Schema::Single;
      ts.num_classes = 2;
      ts.train = synth_task(10 + static_cast<uint64_t>(k), sspec);
      ts.dev = ts.train;
      tasks.push_back(ts);
    }
    MtlModel model = MtlModel::init(tasks, 4, 4, 4, rng);
    for (Eigen::Index i = 0; i < model.disc_w.value.size(); ++i)
      model.disc_w.value(i) = rng.uniform(-0.5, 0.5);
    auto batches = make_batches(tasks[0].train, 3, table.vocab);
    std::vector<int> labels;
    for (const auto& r : tasks[0].train) labels.push_back(r.label);
    run("asp loss (K=2)",
        grad_check(
            [&](Tape& t) {
              TaskForward f = forward_task(t, model, 0, batches[0], nullptr, table);
              Var loss = softmax_xent_cols(f.logits, labels);
              loss = add(loss, scale(adv_loss(t, model, f.shared_enc, 0, false), 0.05));
              loss = add(loss, scale(diff_loss(f.shared_enc[0], f.private_enc[0]), 0.01));
              return loss;
            },
            model.all_params()),
        1e-4);
  }

  std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial shared-private sentence-encoder workbench"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train SP/ASP encoders");
  std::string config_path, out_dir = "run", mode_flag, preset;
  uint64_t seed = 0;
  bool have_seed = false;
  double beta_flag = -1, gamma_flag = -1;
  int hidden_flag = 0, batch_flag = 0;
  train_cmd->add_option("--config", config_path)->required();
  train_cmd->add_option("--out", out_dir);
  train_cmd->add_option("--seed", seed)->each([&](const std::string&) { have_seed = true; });
  train_cmd->add_option("--mode", mode_flag)->check(CLI::IsMember({"sp", "asp", "asp_alternating"}));
  train_cmd->add_option("--beta", beta_flag);
  train_cmd->add_option("--gamma", gamma_flag);
  train_cmd->add_option("--beta-gamma", preset);
  train_cmd->add_option("--hidden", hidden_flag);
  train_cmd->add_option("--batch", batch_flag);

  // embed
  auto* embed_cmd = app.add_subcommand("embed", "embed a corpus with a trained bundle");
  std::string manifest, corpus, embed_mode = "shared", embed_out = "embeddings.bin";
  embed_cmd->add_option("--manifest", manifest)->required();
  embed_cmd->add_option("--corpus", corpus)->required();
  embed_cmd->add_option("--mode", embed_mode);
  embed_cmd->add_option("--out", embed_out);

  // combine
  auto* combine_cmd = app.add_subcommand("combine", "concatenate aligned embedding caches");
  std::vector<std::string> combine_inputs;
  std::string combine_out = "combined.bin";
  bool l2 = false;
  combine_cmd->add_option("inputs", combine_inputs)->required();
  combine_cmd->add_option("--out", combine_out);
  combine_cmd->add_flag("--l2-normalize", l2);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "frozen-feature transfer evaluation");
  std::string eval_config, eval_out = "report.json";
  eval_cmd->add_option("--config", eval_config)->required();
  eval_cmd->add_option("--out", eval_out);

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "task-identity probe over embedding caches");
  std::vector<std::string> probe_train, probe_test;
  std::string probe_out;
  uint64_t probe_seed = 0;
  probe_cmd->add_option("--train", probe_train)->required();
  probe_cmd->add_option("--test", probe_test)->required();
  probe_cmd->add_option("--seed", probe_seed);
  probe_cmd->add_option("--out", probe_out);

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "weighted-pooling encoder contribution");
  std::vector<std::string> an_train, an_test, an_names;
  std::string an_labels, an_test_labels, an_out;
  uint64_t an_seed = 0;
  analyze_cmd->add_option("--train", an_train)->required();
  analyze_cmd->add_option("--test", an_test)->required();
  analyze_cmd->add_option("--labels", an_labels)->required();
  analyze_cmd->add_option("--test-labels", an_test_labels)->required();
  analyze_cmd->add_option("--names", an_names);
  analyze_cmd->add_option("--seed", an_seed);
  analyze_cmd->add_option("--out", an_out);

  // curve
  auto* curve_cmd = app.add_subcommand("curve", "learning curve over training-set sizes");
  std::string cv_train, cv_train_y, cv_dev, cv_dev_y, cv_test, cv_test_y, cv_out = "curve.csv";
  std::vector<int> cv_sizes;
  uint64_t cv_seed = 0;
  curve_cmd->add_option("--train", cv_train)->required();
  curve_cmd->add_option("--train-labels", cv_train_y)->required();
  curve_cmd->add_option("--dev", cv_dev)->required();
  curve_cmd->add_option("--dev-labels", cv_dev_y)->required();
  curve_cmd->add_option("--test", cv_test)->required();
  curve_cmd->add_option("--test-labels", cv_test_y)->required();
  curve_cmd->add_option("--sizes", cv_sizes)->required();
  curve_cmd->add_option("--seed", cv_seed);
  curve_cmd->add_option("--out", cv_out);

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference verification suites");
  std::string gc_scope = "all";
  bool gc_fault = false;
  gc_cmd->add_option("scope", gc_scope)->check(CLI::IsMember({"ops", "encoder", "mtl", "all"}));
  gc_cmd->add_flag("--inject-fault", gc_fault);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd)
      return cmd_train(config_path, out_dir, seed, have_seed, mode_flag, beta_flag, gamma_flag,
                       preset, hidden_flag, batch_flag);
    if (*embed_cmd) return cmd_embed(manifest, corpus, embed_mode, embed_out);
    if (*combine_cmd) return cmd_combine(combine_inputs, combine_out, l2);
    if (*eval_cmd) return cmd_eval(eval_config, eval_out);
    if (*probe_cmd) return cmd_probe(probe_train, probe_test, probe_seed, probe_out);
    if (*analyze_cmd)
      return cmd_analyze(an_train, an_test, an_labels, an_test_labels, an_names, an_seed, an_out);
    if (*curve_cmd)
      return cmd_curve(cv_train, cv_train_y, cv_dev, cv_dev_y, cv_test, cv_test_y, cv_sizes,
                       cv_seed, cv_out);
    if (*gc_cmd) return cmd_gradcheck(gc_scope, gc_fault);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
