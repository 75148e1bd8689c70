// codesumm: train and evaluate code-summarization models on
// (Java method, one-line comment) pairs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "codesumm/checkpoint.hpp"
#include "codesumm/corpus.hpp"
#include "codesumm/decoding.hpp"
#include "codesumm/errors.hpp"
#include "codesumm/metrics.hpp"
#include "codesumm/tokenizer.hpp"
#include "codesumm/training.hpp"
#include "codesumm/vocab.hpp"

namespace {

using json = nlohmann::json;
using namespace codesumm;

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::string read_all(std::istream& in) {
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---------------- preprocess ----------------

struct PreprocessReport {
  std::size_t pairs_in = 0;
  std::size_t pairs_kept = 0;
  std::size_t dropped_by_length = 0;
  std::size_t dropped_empty = 0;
};

int cmd_preprocess(const std::vector<std::string>& method_files,
                   const std::vector<std::string>& comment_files,
                   const std::string& out_dir) {
  if (method_files.size() != comment_files.size()) {
    throw std::invalid_argument("--methods and --comments must pair up");
  }
  PreprocessReport report;
  TokenizedCorpus corpus;
  for (std::size_t f = 0; f < method_files.size(); ++f) {
    const auto methods = read_lines(method_files[f]);
    const auto comments = read_lines(comment_files[f]);
    if (methods.size() != comments.size()) {
      throw FormatError(method_files[f] + " has " +
                        std::to_string(methods.size()) + " lines but " +
                        comment_files[f] + " has " +
                        std::to_string(comments.size()));
    }
    for (std::size_t i = 0; i < methods.size(); ++i) {
      ++report.pairs_in;
      TokenizedPair pair;
      try {
        pair.method = tokenize_code(methods[i]);
        pair.comment = tokenize_comment(comments[i]);
      } catch (const EmptySequenceError&) {
        ++report.dropped_empty;
        continue;
      }
      if (!filter_pair(pair.method, pair.comment)) {
        ++report.dropped_by_length;
        continue;
      }
      ++report.pairs_kept;
      corpus.pairs.push_back(std::move(pair));
    }
  }
  corpus.save_dir(out_dir);
  std::cout << json{{"pairs_in", report.pairs_in},
                    {"pairs_kept", report.pairs_kept},
                    {"dropped_by_length", report.dropped_by_length},
                    {"dropped_empty", report.dropped_empty}}
                   .dump()
            << "\n";
  return 0;
}

// ---------------- split / vocab ----------------

int cmd_split(const std::string& corpus_dir, const std::string& out_dir,
              std::size_t n_train, std::size_t n_val, std::size_t n_test,
              std::uint64_t seed) {
  const TokenizedCorpus corpus = TokenizedCorpus::load_dir(corpus_dir);
  const CorpusSplit split = split_corpus(corpus, n_train, n_val, n_test, seed);
  split.train.save_dir(out_dir + "/train");
  split.val.save_dir(out_dir + "/val");
  split.test.save_dir(out_dir + "/test");
  std::cout << json{{"train", split.train.pairs.size()},
                    {"val", split.val.pairs.size()},
                    {"test", split.test.pairs.size()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_build_vocab(const std::string& corpus_dir, const std::string& out_dir,
                    std::size_t min_count, std::size_t max_size) {
  const TokenizedCorpus corpus = TokenizedCorpus::load_dir(corpus_dir);
  std::vector<std::vector<std::string>> methods, comments;
  for (const auto& p : corpus.pairs) {
    methods.push_back(p.method);
    comments.push_back(p.comment);
  }
  std::filesystem::create_directories(out_dir);
  const Vocabulary src = Vocabulary::build(methods, min_count, max_size);
  const Vocabulary tgt = Vocabulary::build(comments, min_count, max_size);
  src.save_file(out_dir + "/functions.vocab");
  tgt.save_file(out_dir + "/comments.vocab");
  std::cout << json{{"src_vocab", src.size()}, {"tgt_vocab", tgt.size()}}
                   .dump()
            << "\n";
  return 0;
}

// ---------------- train ----------------

struct TrainFlags {
  std::string model = "transformer";
  std::string train_dir, val_dir, src_vocab, tgt_vocab, out_dir;
  std::size_t layers = 1, d_model = 256, heads = 8, d_k = 0, d_v = 0,
              d_ff = 512;
  std::size_t embed_dim = 256, hidden_dim = 256;
  std::size_t batch = 32, epochs = 10;
  double lr = 1e-4, dropout = 0.1, clip_norm = 5.0;
  std::uint64_t seed = 1;
};

int cmd_train(const TrainFlags& flags) {
  const Vocabulary src_vocab = Vocabulary::load_file(flags.src_vocab);
  const Vocabulary tgt_vocab = Vocabulary::load_file(flags.tgt_vocab);
  const TokenizedCorpus train_corpus =
      TokenizedCorpus::load_dir(flags.train_dir);
  const TokenizedCorpus val_corpus =
      flags.val_dir.empty() ? TokenizedCorpus{}
                            : TokenizedCorpus::load_dir(flags.val_dir);
  const auto train_pairs = encode_corpus(train_corpus, src_vocab, tgt_vocab);
  const auto val_pairs = encode_corpus(val_corpus, src_vocab, tgt_vocab);

  ModelConfig config;
  if (flags.model == "seq2seq") {
    Seq2SeqConfig c;
    c.src_vocab_size = src_vocab.size();
    c.tgt_vocab_size = tgt_vocab.size();
    c.embed_dim = flags.embed_dim;
    c.hidden_dim = flags.hidden_dim;
    c.dropout = flags.dropout;
    config = c;
  } else if (flags.model == "transformer") {
    TransformerConfig c;
    c.n_layers = flags.layers;
    c.d_model = flags.d_model;
    c.n_heads = flags.heads;
    c.d_k = flags.d_k;
    c.d_v = flags.d_v;
    c.d_ff = flags.d_ff;
    c.src_vocab_size = src_vocab.size();
    c.tgt_vocab_size = tgt_vocab.size();
    c.dropout = flags.dropout;
    config = c;
  } else {
    throw std::invalid_argument("unknown model kind '" + flags.model + "'");
  }

  TrainHyper hyper;
  hyper.lr = flags.lr;
  hyper.epochs = flags.epochs;
  hyper.batch_size = flags.batch;
  hyper.seed = flags.seed;
  hyper.dropout = flags.dropout;
  hyper.clip_norm = flags.clip_norm;

  const TrainRun run =
      train(config, train_pairs, val_pairs, hyper, flags.out_dir, &std::cerr);
  std::cout << json{{"best_epoch", run.best_epoch},
                    {"best_val_ppl", run.best_val_ppl},
                    {"best_checkpoint", run.best_checkpoint_path},
                    {"epochs", run.epochs.size()}}
                   .dump()
            << "\n";
  return 0;
}

// ---------------- eval / summarize / attention ----------------

int cmd_eval(const std::string& checkpoint, const std::string& test_dir,
             const std::string& src_vocab_path,
             const std::string& tgt_vocab_path, std::size_t batch,
             std::size_t threads) {
  const AnyModel model = load_checkpoint(checkpoint);
  const Vocabulary src_vocab = Vocabulary::load_file(src_vocab_path);
  const Vocabulary tgt_vocab = Vocabulary::load_file(tgt_vocab_path);
  const TokenizedCorpus test = TokenizedCorpus::load_dir(test_dir);
  const EvalResult result =
      evaluate_model(model, test, src_vocab, tgt_vocab, batch, threads);
  std::cout << json{{"bleu", result.bleu * 100.0},
                    {"test_ppl", result.perplexity},
                    {"n_examples", result.n_examples}}
                   .dump()
            << "\n";
  return 0;
}

// Tokenizes raw method text, truncating to the model's length limit.
TokenSequence prepare_source(const std::string& method_source,
                             const Vocabulary& src_vocab,
                             std::size_t length_cap) {
  std::vector<std::string> tokens = tokenize_code(method_source);
  if (tokens.size() > length_cap) {
    std::cerr << "note: method truncated from " << tokens.size() << " to "
              << length_cap << " tokens\n";
    tokens.resize(length_cap);
  }
  return make_sequence(tokens, src_vocab);
}

std::size_t model_length_cap(const AnyModel& model) {
  if (std::holds_alternative<TransformerModel>(model)) {
    return std::min<std::size_t>(
        kMaxMethodTokens,
        std::get<TransformerModel>(model).config().max_len);
  }
  return kMaxMethodTokens;
}

SummaryResult summarize_one(const AnyModel& model, const TokenSequence& src,
                            const Vocabulary& tgt_vocab) {
  return std::visit(
      [&](const auto& m) {
        return greedy_decode(m, src, tgt_vocab, kMaxCommentTokens + 1);
      },
      model);
}

int cmd_summarize(const std::string& checkpoint,
                  const std::string& src_vocab_path,
                  const std::string& tgt_vocab_path, const std::string& input,
                  bool batch_mode) {
  const AnyModel model = load_checkpoint(checkpoint);
  const Vocabulary src_vocab = Vocabulary::load_file(src_vocab_path);
  const Vocabulary tgt_vocab = Vocabulary::load_file(tgt_vocab_path);

  std::string text;
  if (input.empty() || input == "-") {
    text = read_all(std::cin);
  } else {
    std::ifstream in(input);
    if (!in) throw FormatError("cannot open " + input);
    text = read_all(in);
  }

  std::vector<std::string> blocks;
  if (batch_mode) {
    // one method per blank-line-separated block
    std::string block;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
      if (blank) {
        if (!block.empty()) blocks.push_back(block);
        block.clear();
      } else {
        block += line;
        block += '\n';
      }
    }
    if (!block.empty()) blocks.push_back(block);
  } else {
    blocks.push_back(text);
  }

  for (const std::string& block : blocks) {
    const TokenSequence src =
        prepare_source(block, src_vocab, model_length_cap(model));
    const SummaryResult result = summarize_one(model, src, tgt_vocab);
    std::string line;
    for (std::size_t i = 0; i < result.tokens.size(); ++i) {
      if (i) line += ' ';
      line += result.tokens[i];
    }
    std::cout << line << "\n";
  }
  return 0;
}

int cmd_attention(const std::string& checkpoint,
                  const std::string& src_vocab_path,
                  const std::string& tgt_vocab_path, const std::string& input,
                  const std::string& out_path) {
  const AnyModel model = load_checkpoint(checkpoint);
  const Vocabulary src_vocab = Vocabulary::load_file(src_vocab_path);
  const Vocabulary tgt_vocab = Vocabulary::load_file(tgt_vocab_path);

  std::string text;
  if (input.empty() || input == "-") {
    text = read_all(std::cin);
  } else {
    std::ifstream in(input);
    if (!in) throw FormatError("cannot open " + input);
    text = read_all(in);
  }
  const TokenSequence src =
      prepare_source(text, src_vocab, model_length_cap(model));
  const SummaryResult result = summarize_one(model, src, tgt_vocab);

  json doc = {{"source_tokens", result.attention.source_tokens},
              {"generated_tokens", result.attention.generated_tokens},
              {"weights", result.attention.weights}};
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + out_path);
  out << doc.dump(2) << "\n";
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"code summarization: preprocess, train, evaluate, summarize"};
  app.require_subcommand(1);

  // preprocess
  auto* pre = app.add_subcommand("preprocess",
                                 "tokenize and filter raw method/comment "
                                 "line-aligned files");
  std::vector<std::string> method_files, comment_files;
  std::string out_dir;
  pre->add_option("--methods", method_files, "raw method file, one per line")
      ->required();
  pre->add_option("--comments", comment_files,
                  "raw comment file, one per line")
      ->required();
  pre->add_option("--out", out_dir, "output corpus directory")->required();

  // split
  auto* split = app.add_subcommand("split", "disjoint train/val/test split");
  std::string split_corpus_dir, split_out, preset;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  std::uint64_t split_seed = 1;
  split->add_option("--corpus", split_corpus_dir, "tokenized corpus dir")
      ->required();
  split->add_option("--out", split_out, "output directory")->required();
  split->add_option("--train", n_train, "training examples");
  split->add_option("--val", n_val, "validation examples");
  split->add_option("--test", n_test, "test examples");
  split->add_option("--preset", preset,
                    "small (100000/3000/3000), medium (1000000/5000/5000) or "
                    "large (2100000/10000/10000)");
  split->add_option("--seed", split_seed, "shuffle seed");

  // build-vocab
  auto* vocab = app.add_subcommand("build-vocab",
                                   "frequency-ranked source and target "
                                   "vocabularies");
  std::string vocab_corpus_dir, vocab_out;
  std::size_t min_count = 2, max_size = 50000;
  vocab->add_option("--corpus", vocab_corpus_dir, "tokenized corpus dir")
      ->required();
  vocab->add_option("--out", vocab_out, "output directory")->required();
  vocab->add_option("--min-count", min_count, "minimum token frequency");
  vocab->add_option("--max-size", max_size, "maximum learned entries");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  TrainFlags tf;
  train_cmd->add_option("--model", tf.model, "seq2seq or transformer");
  train_cmd->add_option("--train-dir", tf.train_dir, "training corpus dir")
      ->required();
  train_cmd->add_option("--val-dir", tf.val_dir, "validation corpus dir");
  train_cmd->add_option("--src-vocab", tf.src_vocab, "functions vocabulary")
      ->required();
  train_cmd->add_option("--tgt-vocab", tf.tgt_vocab, "comments vocabulary")
      ->required();
  train_cmd->add_option("--out", tf.out_dir, "run output directory")
      ->required();
  train_cmd->add_option("--layers", tf.layers, "encoder/decoder layers N");
  train_cmd->add_option("--d-model", tf.d_model, "model width");
  train_cmd->add_option("--heads", tf.heads, "attention heads h");
  train_cmd->add_option("--d-k", tf.d_k, "per-head key width (default d_model/h)");
  train_cmd->add_option("--d-v", tf.d_v, "per-head value width (default d_model/h)");
  train_cmd->add_option("--d-ff", tf.d_ff, "feed-forward inner width");
  train_cmd->add_option("--embed-dim", tf.embed_dim, "seq2seq embedding width");
  train_cmd->add_option("--hidden-dim", tf.hidden_dim,
                        "seq2seq hidden width per direction");
  train_cmd->add_option("--batch", tf.batch, "batch size");
  train_cmd->add_option("--epochs", tf.epochs, "training epochs");
  train_cmd->add_option("--lr", tf.lr, "static learning rate");
  train_cmd->add_option("--dropout", tf.dropout, "dropout probability");
  train_cmd->add_option("--clip-norm", tf.clip_norm, "gradient clip norm");
  train_cmd->add_option("--seed", tf.seed, "run seed");

  // eval
  auto* eval_cmd = app.add_subcommand("eval",
                                      "greedy-decode a test corpus and report "
                                      "BLEU and perplexity");
  std::string eval_ckpt, eval_dir, eval_src_vocab, eval_tgt_vocab;
  std::size_t eval_batch = 32, eval_threads = 1;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")
      ->required();
  eval_cmd->add_option("--test-dir", eval_dir, "test corpus dir")->required();
  eval_cmd->add_option("--src-vocab", eval_src_vocab, "functions vocabulary")
      ->required();
  eval_cmd->add_option("--tgt-vocab", eval_tgt_vocab, "comments vocabulary")
      ->required();
  eval_cmd->add_option("--batch", eval_batch, "perplexity batch size");
  eval_cmd->add_option("--threads", eval_threads, "decode worker threads");

  // summarize
  auto* sum_cmd = app.add_subcommand("summarize",
                                     "generate a one-line comment for a "
                                     "method");
  std::string sum_ckpt, sum_src_vocab, sum_tgt_vocab, sum_input;
  bool sum_batch = false;
  sum_cmd->add_option("--checkpoint", sum_ckpt, "model checkpoint")
      ->required();
  sum_cmd->add_option("--src-vocab", sum_src_vocab, "functions vocabulary")
      ->required();
  sum_cmd->add_option("--tgt-vocab", sum_tgt_vocab, "comments vocabulary")
      ->required();
  sum_cmd->add_option("--input", sum_input,
                      "method source file ('-' or empty reads stdin)");
  sum_cmd->add_flag("--batch-mode", sum_batch,
                    "one method per blank-line-separated block");

  // attention
  auto* attn_cmd = app.add_subcommand("attention",
                                      "export attention weights for one "
                                      "method");
  std::string attn_ckpt, attn_src_vocab, attn_tgt_vocab, attn_input, attn_out;
  attn_cmd->add_option("--checkpoint", attn_ckpt, "model checkpoint")
      ->required();
  attn_cmd->add_option("--src-vocab", attn_src_vocab, "functions vocabulary")
      ->required();
  attn_cmd->add_option("--tgt-vocab", attn_tgt_vocab, "comments vocabulary")
      ->required();
  attn_cmd->add_option("--input", attn_input,
                       "method source file ('-' or empty reads stdin)");
  attn_cmd->add_option("--out", attn_out, "output JSON path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) return cmd_preprocess(method_files, comment_files, out_dir);
    if (split->parsed()) {
      if (preset == "small") {
        n_train = 100000; n_val = 3000; n_test = 3000;
      } else if (preset == "medium") {
        n_train = 1000000; n_val = 5000; n_test = 5000;
      } else if (preset == "large") {
        n_train = 2100000; n_val = 10000; n_test = 10000;
      } else if (!preset.empty()) {
        throw std::invalid_argument("unknown preset '" + preset + "'");
      }
      return cmd_split(split_corpus_dir, split_out, n_train, n_val, n_test,
                       split_seed);
    }
    if (vocab->parsed()) {
      return cmd_build_vocab(vocab_corpus_dir, vocab_out, min_count, max_size);
    }
    if (train_cmd->parsed()) return cmd_train(tf);
    if (eval_cmd->parsed()) {
      return cmd_eval(eval_ckpt, eval_dir, eval_src_vocab, eval_tgt_vocab,
                      eval_batch, eval_threads);
    }
    if (sum_cmd->parsed()) {
      return cmd_summarize(sum_ckpt, sum_src_vocab, sum_tgt_vocab, sum_input,
                           sum_batch);
    }
    if (attn_cmd->parsed()) {
      return cmd_attention(attn_ckpt, attn_src_vocab, attn_tgt_vocab,
                           attn_input, attn_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
