#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mrnn/corpus.hpp"
#include "mrnn/model_io.hpp"
#include "mrnn/models.hpp"
#include "mrnn/ordinal.hpp"
#include "mrnn/training.hpp"

namespace {

using mrnn::Model;
using ordered_json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

struct TrainArgs {
  std::string model;
  std::string head;
  int classes = 0;
  std::string train_path;
  std::string dev_path;
  std::string embeddings_path;
  int random_dim = 0;
  int hidden = 8;
  std::string activation = "tanh";
  double lr = 0.1;
  double l2 = 0.0;
  int epochs = 300;
  int patience = 25;
  std::uint64_t seed = 42;
  double clip = 0.0;
  bool clip_set = false;
  std::string out_path;
  bool intermediate = false;
  int synthetic = 0;
  std::string config_path;
};

// Signals a bad flag or config key; mapped to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EvalArgs {
  std::string model_file;
  std::string data;
};

struct PredictArgs {
  std::string model_file;
};

struct GradcheckArgs {
  std::uint64_t seed = 7;
  std::string model;  // empty = all kinds
  int instances = 5;
  std::string inject_fault;  // test hook: block name to corrupt
};

struct EquivcheckArgs {
  std::uint64_t seed = 7;
  int max_len = 4;
  int draws = 10;
  int vocab = 3;
  int dim = 3;
  double perturb = 0.0;  // test hook: offset added to one base-matrix entry
};

struct InspectArgs {
  std::string model_file;
  std::string data;
  std::string out;
};

int usage_error(const std::string& msg) {
  std::cerr << "error: " << msg << "\n";
  return kExitUsage;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  std::istringstream ss(value);
  ss >> out;
  if (ss.fail() || !(ss >> std::ws).eof()) {
    throw UsageError("config key \"" + key + "\" has a bad value: " + value);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw UsageError("config key \"" + key + "\" expects a boolean, got: " + value);
}

// "key = value" lines with '#' comments. Keys mirror the train flags; keys
// already given on the command line keep their flag values.
void apply_config_file(const CLI::App& cmd, TrainArgs& a) {
  std::ifstream in(a.config_path);
  if (!in) throw std::runtime_error("cannot open config file " + a.config_path);

  const auto flag_given = [&cmd](const std::string& long_name) {
    const auto* opt = cmd.get_option_no_throw(long_name);
    return opt != nullptr && opt->count() > 0;
  };

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw UsageError(a.config_path + ":" + std::to_string(line_no) +
                       ": expected \"key = value\"");
    }
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (flag_given("--" + key)) continue;  // command line wins

    if (key == "model") a.model = value;
    else if (key == "head") a.head = value;
    else if (key == "classes") a.classes = parse_number<int>(key, value);
    else if (key == "train") a.train_path = value;
    else if (key == "dev") a.dev_path = value;
    else if (key == "embeddings") a.embeddings_path = value;
    else if (key == "random-dim") a.random_dim = parse_number<int>(key, value);
    else if (key == "hidden") a.hidden = parse_number<int>(key, value);
    else if (key == "activation") a.activation = value;
    else if (key == "lr") a.lr = parse_number<double>(key, value);
    else if (key == "l2") a.l2 = parse_number<double>(key, value);
    else if (key == "epochs") a.epochs = parse_number<int>(key, value);
    else if (key == "patience") a.patience = parse_number<int>(key, value);
    else if (key == "seed") a.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "clip") { a.clip = parse_number<double>(key, value); a.clip_set = true; }
    else if (key == "out") a.out_path = value;
    else if (key == "intermediate-supervision") a.intermediate = parse_bool(key, value);
    else if (key == "synthetic") a.synthetic = parse_number<int>(key, value);
    else {
      throw UsageError(a.config_path + ":" + std::to_string(line_no) +
                       ": unknown config key \"" + key + "\"");
    }
  }
}

mrnn::Corpus load_data_for_model(const Model& model, const std::string& path) {
  return mrnn::load_corpus_tsv(path, model.vocab, model.n_classes);
}

int run_train(const CLI::App& cmd, TrainArgs& a) {
  if (!a.config_path.empty()) apply_config_file(cmd, a);

  if (a.model.empty()) return usage_error("--model is required");
  if (a.head.empty()) return usage_error("--head is required");
  if (a.classes == 0) return usage_error("--classes is required");

  mrnn::ModelKind kind;
  mrnn::HeadKind head;
  mrnn::Activation f;
  try {
    kind = mrnn::model_kind_from_name(a.model);
    head = mrnn::head_kind_from_name(a.head);
    f = mrnn::activation_from_name(a.activation);
  } catch (const mrnn::DomainError& e) {
    return usage_error(e.what());
  }
  if (f != mrnn::Activation::identity && f != mrnn::Activation::tanh &&
      f != mrnn::Activation::rectifier) {
    return usage_error("--activation must be identity, tanh or rectifier");
  }
  if (head == mrnn::HeadKind::scalar) {
    return usage_error("--head must be ordinal or classify");
  }
  if (a.classes == 0) return usage_error("--classes is required");
  if (a.classes < 2) return usage_error("--classes must be at least 2");
  const bool needs_embeddings = kind != mrnn::ModelKind::matrix_space;
  const bool synthetic = a.synthetic > 0;

  if (!synthetic && (a.train_path.empty() || a.dev_path.empty())) {
    return usage_error("--train and --dev are required unless --synthetic is given");
  }
  if (!a.embeddings_path.empty() && a.random_dim > 0) {
    return usage_error("--embeddings and --random-dim are mutually exclusive");
  }
  if (needs_embeddings && !synthetic && a.embeddings_path.empty() && a.random_dim == 0) {
    return usage_error("elman/mrnn models need --embeddings or --random-dim");
  }

  mrnn::TrainConfig cfg;
  cfg.model = kind;
  cfg.head = head;
  cfg.f = f;
  cfg.d_h = a.hidden;
  cfg.n_classes = a.classes;
  cfg.learning_rate = a.lr;
  cfg.l2 = a.l2;
  cfg.max_epochs = a.epochs;
  cfg.patience = a.patience;
  cfg.seed = a.seed;
  if (a.clip_set) {
    if (a.clip > 0.0) cfg.clip_norm = a.clip;
  } else if (kind == mrnn::ModelKind::mrnn) {
    cfg.clip_norm = 5.0;  // multiplicative recurrences benefit from clipping
  }
  cfg.intermediate_supervision = a.intermediate;

  mrnn::Vocabulary vocab;
  mrnn::Corpus train_set, dev_set;
  std::optional<mrnn::EmbeddingTable> table;

  if (synthetic) {
    const auto n_train = static_cast<std::size_t>(a.synthetic);
    const std::size_t n_dev =
        std::max<std::size_t>(static_cast<std::size_t>(a.classes), n_train / 4);
    auto [voc, tr] = mrnn::generate_synthetic_corpus(a.seed + 1, n_train, a.classes);
    auto [voc2, dv] = mrnn::generate_synthetic_corpus(a.seed + 2, n_dev, a.classes);
    vocab = std::move(voc);
    train_set = std::move(tr);
    dev_set = std::move(dv);
    dev_set.split = mrnn::Split::dev;
    if (needs_embeddings) {
      const int dim = a.random_dim > 0 ? a.random_dim : 10;
      table = mrnn::init_random_embeddings(vocab, static_cast<std::size_t>(dim), 0.1,
                                           a.seed + 3);
    }
  } else {
    if (!a.embeddings_path.empty()) {
      auto [voc, tab] = mrnn::load_embeddings_text(a.embeddings_path);
      vocab = std::move(voc);
      table = std::move(tab);
    } else {
      vocab = mrnn::build_vocab_from_tsv(a.train_path);
      if (needs_embeddings) {
        table = mrnn::init_random_embeddings(
            vocab, static_cast<std::size_t>(a.random_dim), 0.1, a.seed + 3);
      }
    }
    train_set = mrnn::load_corpus_tsv(a.train_path, vocab, a.classes, mrnn::Split::train);
    dev_set = mrnn::load_corpus_tsv(a.dev_path, vocab, a.classes, mrnn::Split::dev);
  }
  if (table) cfg.d_x = static_cast<int>(table->dim);

  const auto log_epoch = [](const mrnn::EpochStats& s) {
    ordered_json line;
    line["epoch"] = s.epoch;
    line["train_loss"] = s.train_loss;
    line["dev_metric"] = s.dev_metric;
    std::cout << line.dump() << "\n";
  };

  mrnn::TrainReport report;
  Model model = mrnn::train(cfg, train_set, dev_set, vocab, std::move(table), &report,
                            log_epoch);

  if (!a.out_path.empty()) {
    mrnn::save_model_file(a.out_path, model, cfg);
  }
  std::cerr << "best epoch " << report.best_epoch << ", dev metric "
            << mrnn::format_double(report.best_dev_metric) << "\n";
  return kExitOk;
}

int run_eval(const EvalArgs& a) {
  const Model model = mrnn::load_model_file(a.model_file).model;
  const mrnn::Corpus data = load_data_for_model(model, a.data);
  const auto [rank, acc] = mrnn::evaluate_metrics(model, data);
  ordered_json out;
  out["n"] = data.examples.size();
  out["ranking_loss"] = rank;
  out["accuracy"] = acc;
  std::cout << out.dump() << "\n";
  return kExitOk;
}

int run_predict(const PredictArgs& a) {
  const Model model = mrnn::load_model_file(a.model_file).model;
  std::string line;
  while (std::getline(std::cin, line)) {
    const auto toks = mrnn::tokenize(line);
    if (toks.empty()) continue;
    std::vector<int> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(model.vocab.lookup(t));
    const mrnn::Vector y = model.output_for(ids);
    const int label = mrnn::predict_label(model.head, model.n_classes, y);
    std::cout << label << "\t";
    for (std::size_t i = 0; i < y.dim(); ++i) {
      if (i > 0) std::cout << ",";
      std::cout << mrnn::format_double(y[i]);
    }
    std::cout << "\n";
  }
  return kExitOk;
}

int run_gradcheck(const GradcheckArgs& a) {
  const double tolerance = 1e-4;
  std::vector<mrnn::ModelKind> kinds;
  if (a.model.empty()) {
    kinds = {mrnn::ModelKind::matrix_space, mrnn::ModelKind::elman, mrnn::ModelKind::mrnn};
  } else {
    kinds = {mrnn::model_kind_from_name(a.model)};
  }
  const mrnn::HeadKind heads[] = {mrnn::HeadKind::ordinal, mrnn::HeadKind::classify};
  const mrnn::Activation activations[] = {mrnn::Activation::identity,
                                          mrnn::Activation::tanh,
                                          mrnn::Activation::rectifier};

  bool ok = true;
  std::uint64_t combo = 0;
  for (const auto kind : kinds) {
    for (const auto head : heads) {
      for (const auto f : activations) {
        ++combo;
        // one max-error line per parameter block across the combo's instances
        std::map<std::string, double> block_err;
        for (int i = 0; i < a.instances; ++i) {
          auto inst = mrnn::make_gradcheck_instance(
              kind, head, f, a.seed + combo * 1000 + static_cast<std::uint64_t>(i));
          std::optional<mrnn::FaultInjection> fault;
          if (!a.inject_fault.empty()) {
            fault = mrnn::FaultInjection{a.inject_fault, 0, 2.0};
          }
          mrnn::GradCheckReport report;
          try {
            report = mrnn::grad_check(inst.model, inst.example, 1e-5,
                                      fault ? &*fault : nullptr);
          } catch (const mrnn::DomainError&) {
            // fault target not present in this model family; check normally
            report = mrnn::grad_check(inst.model, inst.example, 1e-5, nullptr);
          }
          for (const auto& b : report.blocks) {
            auto [it, fresh] = block_err.try_emplace(b.name, 0.0);
            it->second = std::max(it->second, b.max_rel_err);
          }
        }
        for (const auto& [name, err] : block_err) {
          const bool pass = err < tolerance;
          ok = ok && pass;
          std::cout << mrnn::model_kind_name(kind) << " " << mrnn::head_kind_name(head)
                    << " " << mrnn::activation_name(f) << " " << name << " "
                    << mrnn::format_double(err) << (pass ? "" : " FAIL") << "\n";
        }
      }
    }
  }
  return ok ? kExitOk : kExitData;
}

int run_equivcheck(const EquivcheckArgs& a) {
  if (a.max_len < 1) return usage_error("--max-len must be >= 1");
  mrnn::Rng rng(a.seed);
  double worst = 0.0;
  long long sequences = 0;

  std::vector<std::string> words;
  for (int w = 1; w < a.vocab; ++w) words.push_back("w" + std::to_string(w));
  const mrnn::Vocabulary vocab = mrnn::Vocabulary::with_unk(words);

  for (int draw = 0; draw < a.draws; ++draw) {
    mrnn::MatrixSpaceParams ms = mrnn::init_matrix_space(
        vocab.size(), static_cast<std::size_t>(a.dim), mrnn::HeadKind::scalar, 2, 0.5,
        rng);
    mrnn::MRnnParams converted = mrnn::mrnn_from_matrix_space(ms);
    if (a.perturb != 0.0) converted.A.base(0)(0, 0) += a.perturb;

    // enumerate every sequence of each length over the whole vocabulary
    for (int len = 1; len <= a.max_len; ++len) {
      std::vector<int> ids(static_cast<std::size_t>(len), 0);
      while (true) {
        const double score = mrnn::forward_matrix_space(ms, ids).score;
        std::vector<mrnn::Vector> onehots;
        for (int id : ids) {
          onehots.push_back(mrnn::one_hot(vocab.size(), static_cast<std::size_t>(id)));
        }
        const auto trace = mrnn::forward_mrnn(converted, onehots);
        worst = std::max(worst, std::abs(trace.outputs.back()[0] - score));
        ++sequences;

        int pos = len - 1;
        while (pos >= 0 && ids[static_cast<std::size_t>(pos)] ==
                               static_cast<int>(vocab.size()) - 1) {
          ids[static_cast<std::size_t>(pos)] = 0;
          --pos;
        }
        if (pos < 0) break;
        ++ids[static_cast<std::size_t>(pos)];
      }
    }
  }

  const double tolerance = 1e-10;
  ordered_json out;
  out["draws"] = a.draws;
  out["sequences"] = sequences;
  out["max_abs_diff"] = worst;
  out["tolerance"] = tolerance;
  std::cout << out.dump() << "\n";
  return worst < tolerance ? kExitOk : kExitData;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out += "\"";
  return out;
}

int run_inspect(const InspectArgs& a) {
  const Model model = mrnn::load_model_file(a.model_file).model;
  const mrnn::Corpus data = load_data_for_model(model, a.data);
  std::ostringstream csv;
  for (const auto& ex : data.examples) {
    std::string text;
    for (std::size_t i = 0; i < ex.token_ids.size(); ++i) {
      if (i > 0) text.push_back(' ');
      text += model.vocab.tokens[static_cast<std::size_t>(ex.token_ids[i])];
    }
    const int pred = model.predict(ex.token_ids);
    const mrnn::Vector h = model.final_hidden(ex.token_ids);
    csv << csv_field(text) << "," << ex.label << "," << pred;
    for (std::size_t i = 0; i < h.dim(); ++i) csv << "," << mrnn::format_double(h[i]);
    csv << "\n";
  }
  mrnn::write_text_atomic(a.out, csv.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional sequence models for fine-grained sentiment"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a model file");
  train_cmd->add_option("--model", train_args.model, "Model family")
      ->check(CLI::IsMember({"matrix-space", "elman", "mrnn"}));
  train_cmd->add_option("--head", train_args.head, "Output head")
      ->check(CLI::IsMember({"ordinal", "classify"}));
  train_cmd->add_option("--classes", train_args.classes, "Number of classes K")
      ->check(CLI::Range(2, 1000));
  train_cmd->add_option("--train", train_args.train_path, "Training TSV file");
  train_cmd->add_option("--dev", train_args.dev_path, "Development TSV file");
  train_cmd->add_option("--embeddings", train_args.embeddings_path,
                        "Pretrained embedding text file (frozen)");
  train_cmd->add_option("--random-dim", train_args.random_dim,
                        "Random trainable embeddings of this dimension");
  train_cmd->add_option("--hidden", train_args.hidden, "Hidden dimension d_h")
      ->capture_default_str();
  train_cmd->add_option("--activation", train_args.activation, "Recurrence nonlinearity")
      ->check(CLI::IsMember({"identity", "tanh", "rectifier"}))
      ->capture_default_str();
  train_cmd->add_option("--lr", train_args.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--l2", train_args.l2, "L2 penalty")->capture_default_str();
  train_cmd->add_option("--epochs", train_args.epochs, "Maximum epochs")
      ->capture_default_str();
  train_cmd->add_option("--patience", train_args.patience, "Early-stopping patience")
      ->capture_default_str();
  train_cmd->add_option("--seed", train_args.seed, "Random seed")->capture_default_str();
  auto* clip_opt = train_cmd->add_option(
      "--clip", train_args.clip, "Gradient clipping norm (0 disables; default 5 for mrnn)");
  train_cmd->add_option("--out", train_args.out_path, "Model file to write");
  train_cmd->add_flag("--intermediate-supervision", train_args.intermediate,
                      "Apply the example label at every time step");
  train_cmd->add_option("--synthetic", train_args.synthetic,
                        "Train on N generated synthetic examples instead of --train/--dev");
  train_cmd->add_option("--config", train_args.config_path,
                        "Config file with key = value lines (flags win)");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model file on a TSV corpus");
  eval_cmd->add_option("--model-file", eval_args.model_file, "Model file")->required();
  eval_cmd->add_option("--data", eval_args.data, "TSV corpus")->required();

  PredictArgs predict_args;
  auto* predict_cmd =
      app.add_subcommand("predict", "Label phrases read from standard input");
  predict_cmd->add_option("--model-file", predict_args.model_file, "Model file")
      ->required();

  GradcheckArgs gradcheck_args;
  auto* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "Compare analytic gradients against finite differences");
  gradcheck_cmd->add_option("--seed", gradcheck_args.seed, "Random seed")
      ->capture_default_str();
  gradcheck_cmd->add_option("--model", gradcheck_args.model,
                            "Restrict to one model family")
      ->check(CLI::IsMember({"matrix-space", "elman", "mrnn"}));
  gradcheck_cmd->add_option("--instances", gradcheck_args.instances,
                            "Random instances per configuration")
      ->capture_default_str();
  gradcheck_cmd
      ->add_option("--inject-fault", gradcheck_args.inject_fault,
                   "Corrupt this gradient block before comparing (self-test hook)")
      ->group("");

  EquivcheckArgs equivcheck_args;
  auto* equivcheck_cmd = app.add_subcommand(
      "equivcheck", "Check the one-hot mRNN against the matrix-space scores");
  equivcheck_cmd->add_option("--seed", equivcheck_args.seed, "Random seed")
      ->capture_default_str();
  equivcheck_cmd->add_option("--max-len", equivcheck_args.max_len,
                             "Enumerate sequences up to this length")
      ->capture_default_str();
  equivcheck_cmd->add_option("--draws", equivcheck_args.draws,
                             "Number of random parameter draws")
      ->capture_default_str();
  equivcheck_cmd->add_option("--vocab", equivcheck_args.vocab, "Vocabulary size")
      ->capture_default_str();
  equivcheck_cmd->add_option("--dim", equivcheck_args.dim, "Operator dimension")
      ->capture_default_str();
  equivcheck_cmd
      ->add_option("--perturb", equivcheck_args.perturb,
                   "Offset one converted base-matrix entry (self-test hook)")
      ->group("");

  InspectArgs inspect_args;
  auto* inspect_cmd = app.add_subcommand(
      "inspect", "Export per-example final hidden states as CSV");
  inspect_cmd->add_option("--model-file", inspect_args.model_file, "Model file")
      ->required();
  inspect_cmd->add_option("--data", inspect_args.data, "TSV corpus")->required();
  inspect_cmd->add_option("--out", inspect_args.out, "CSV output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  train_args.clip_set = clip_opt->count() > 0;

  try {
    if (*train_cmd) return run_train(*train_cmd, train_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*predict_cmd) return run_predict(predict_args);
    if (*gradcheck_cmd) return run_gradcheck(gradcheck_args);
    if (*equivcheck_cmd) return run_equivcheck(equivcheck_args);
    if (*inspect_cmd) return run_inspect(inspect_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
