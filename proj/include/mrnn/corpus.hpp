#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mrnn/numerics.hpp"

namespace mrnn {

// Input-file problem, carrying the file and 1-based line it was found on.
struct ParseError : std::runtime_error {
  ParseError(const std::string& path, int line_no, const std::string& msg)
      : std::runtime_error(path + ":" + std::to_string(line_no) + ": " + msg),
        line(line_no) {}
  int line;
};

struct Vocabulary {
  std::vector<std::string> tokens;             // id -> surface string
  std::unordered_map<std::string, int> index;  // surface string -> id
  int unk_id = 0;

  // Builds a vocabulary with "<unk>" at id 0 followed by the given words in
  // order, skipping duplicates.
  static Vocabulary with_unk(const std::vector<std::string>& words);

  std::size_t size() const { return tokens.size(); }
  bool contains(const std::string& tok) const { return index.count(tok) != 0; }

  // Id of the token, or unk_id for out-of-vocabulary tokens.
  int lookup(const std::string& tok) const {
    auto it = index.find(tok);
    return it == index.end() ? unk_id : it->second;
  }
};

struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<Vector> vectors;  // one per vocabulary id
  bool trainable = false;
};

struct LabeledSequence {
  std::vector<int> token_ids;  // non-empty
  int label = 0;               // in [0, K)
};

enum class Split { train, dev, test };

struct Corpus {
  std::vector<LabeledSequence> examples;
  int n_classes = 0;
  Split split = Split::train;
};

// Text embedding format: first line "<count> <dim>", then one
// "<token> <v1> ... <v_dim>" per line. Returns the loaded vocabulary (with
// unk) and table; the unk vector is the mean of all loaded vectors. When a
// filter is given, only tokens present in it are kept.
std::pair<Vocabulary, EmbeddingTable> load_embeddings_text(
    const std::string& path, const Vocabulary* vocab_filter = nullptr);

// Entries i.i.d. uniform in [-scale, scale]; trainable.
EmbeddingTable init_random_embeddings(const Vocabulary& vocab, std::size_t dim,
                                      double scale, std::uint64_t seed);

// TSV corpus: one "label<TAB>token token ..." example per line, '#' lines
// are comments. Tokens are lowercased and mapped with unk fallback.
Corpus load_corpus_tsv(const std::string& path, const Vocabulary& vocab,
                       int n_classes, Split split = Split::train);

// Inverse of the TSV line format, for round-trip checks and exports.
std::string sequence_to_tsv_line(const LabeledSequence& seq, const Vocabulary& vocab);

// Collects the vocabulary of a TSV corpus file (lowercased tokens in
// first-seen order, unk prepended). Used by the random-embedding mode where
// no pretrained vocabulary exists.
Vocabulary build_vocab_from_tsv(const std::string& path);

// [x; 1]
Vector augment_with_bias(const Vector& x);

// Lowercase + whitespace split, the same tokenization the TSV loader uses.
std::vector<std::string> tokenize(const std::string& line);

// ---------------------------------------------------------------------------
// Synthetic compositional-sentiment corpus. A small fixed lexicon of scored
// polarity words, intensifiers that push the score away from neutral by one
// class, and a negator that reflects the score about the neutral class. The
// label is a deterministic function of the token sequence, so the corpus is
// perfectly learnable.

struct SyntheticLexicon {
  std::vector<std::pair<std::string, int>> polarity;  // token, base score offset
  std::vector<std::string> intensifiers;
  std::string negator;
};

const SyntheticLexicon& synthetic_lexicon();

// Grammar oracle: the label of a well-formed phrase ([negator]? [intensifier]*
// polarity-word) for a K-class scale.
int synthetic_label(const std::vector<std::string>& tokens, int n_classes);

// Pure function of (seed, n_examples, n_classes). Phrase lengths are 1-4.
std::pair<Vocabulary, Corpus> generate_synthetic_corpus(std::uint64_t seed,
                                                        std::size_t n_examples,
                                                        int n_classes);

}  // namespace mrnn
