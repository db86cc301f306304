#include "mrnn/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mrnn/rng.hpp"

namespace mrnn {

Vocabulary Vocabulary::with_unk(const std::vector<std::string>& words) {
  Vocabulary v;
  v.unk_id = 0;
  v.tokens.push_back("<unk>");
  v.index["<unk>"] = 0;
  for (const auto& w : words) {
    if (v.index.count(w)) continue;
    v.index[w] = static_cast<int>(v.tokens.size());
    v.tokens.push_back(w);
  }
  return v;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

static bool parse_int(const std::string& s, int& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

std::pair<Vocabulary, EmbeddingTable> load_embeddings_text(
    const std::string& path, const Vocabulary* vocab_filter) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path, 1, "missing header line");

  std::istringstream header(line);
  long long count = 0, dim = 0;
  std::string extra;
  if (!(header >> count >> dim) || (header >> extra) || count < 0 || dim < 1) {
    throw ParseError(path, 1, "malformed header, expected \"<count> <dim>\"");
  }

  std::vector<std::string> words;
  std::vector<Vector> vecs;
  std::optional<Vector> explicit_unk;
  long long rows = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string tok;
    if (!(row >> tok)) continue;
    Vector v(static_cast<std::size_t>(dim));
    for (long long i = 0; i < dim; ++i) {
      if (!(row >> v[static_cast<std::size_t>(i)])) {
        throw ParseError(path, line_no,
                         "expected " + std::to_string(dim) + " values for token \"" +
                             tok + "\"");
      }
    }
    std::string trailing;
    if (row >> trailing) {
      throw ParseError(path, line_no,
                       "too many values for token \"" + tok + "\", expected " +
                           std::to_string(dim));
    }
    for (std::size_t i = 0; i < v.dim(); ++i) {
      if (!std::isfinite(v[i])) {
        throw ParseError(path, line_no, "non-finite value for token \"" + tok + "\"");
      }
    }
    ++rows;
    if (tok == "<unk>") {
      explicit_unk = v;
      continue;
    }
    if (vocab_filter != nullptr && !vocab_filter->contains(tok)) continue;
    words.push_back(tok);
    vecs.push_back(std::move(v));
  }
  if (rows != count) {
    throw ParseError(path, line_no,
                     "header declares " + std::to_string(count) + " rows but file has " +
                         std::to_string(rows));
  }
  if (words.empty() && !explicit_unk) {
    throw DomainError("load_embeddings_text: no usable tokens in " + path);
  }

  Vocabulary vocab = Vocabulary::with_unk(words);
  EmbeddingTable table;
  table.dim = static_cast<std::size_t>(dim);
  table.trainable = false;
  table.vectors.resize(vocab.size(), Vector(table.dim));
  for (std::size_t i = 0; i < words.size(); ++i) {
    table.vectors[static_cast<std::size_t>(vocab.index.at(words[i]))] = vecs[i];
  }
  if (explicit_unk) {
    table.vectors[static_cast<std::size_t>(vocab.unk_id)] = *explicit_unk;
  } else {
    Vector mean(table.dim);
    for (const auto& v : vecs)
      for (std::size_t i = 0; i < table.dim; ++i) mean[i] += v[i];
    for (std::size_t i = 0; i < table.dim; ++i)
      mean[i] /= static_cast<double>(vecs.size());
    table.vectors[static_cast<std::size_t>(vocab.unk_id)] = mean;
  }
  return {std::move(vocab), std::move(table)};
}

EmbeddingTable init_random_embeddings(const Vocabulary& vocab, std::size_t dim,
                                      double scale, std::uint64_t seed) {
  if (dim < 1) throw DomainError("init_random_embeddings: dim must be >= 1");
  if (scale <= 0.0) throw DomainError("init_random_embeddings: scale must be > 0");
  Rng rng(seed);
  EmbeddingTable table;
  table.dim = dim;
  table.trainable = true;
  table.vectors.resize(vocab.size(), Vector(dim));
  for (auto& v : table.vectors)
    for (std::size_t i = 0; i < dim; ++i) v[i] = rng.uniform(-scale, scale);
  return table;
}

Corpus load_corpus_tsv(const std::string& path, const Vocabulary& vocab,
                       int n_classes, Split split) {
  if (n_classes < 2) throw DomainError("load_corpus_tsv: need n_classes >= 2");
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");

  Corpus corpus;
  corpus.n_classes = n_classes;
  corpus.split = split;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path, line_no, "expected \"label<TAB>tokens\"");
    }
    int label = 0;
    if (!parse_int(line.substr(0, tab), label)) {
      throw ParseError(path, line_no, "label is not an integer");
    }
    if (label < 0 || label >= n_classes) {
      throw ParseError(path, line_no,
                       "label " + std::to_string(label) + " out of range [0, " +
                           std::to_string(n_classes) + ")");
    }
    const auto toks = tokenize(line.substr(tab + 1));
    if (toks.empty()) {
      throw ParseError(path, line_no, "empty token sequence");
    }
    LabeledSequence seq;
    seq.label = label;
    seq.token_ids.reserve(toks.size());
    for (const auto& t : toks) seq.token_ids.push_back(vocab.lookup(t));
    corpus.examples.push_back(std::move(seq));
  }
  return corpus;
}

std::string sequence_to_tsv_line(const LabeledSequence& seq, const Vocabulary& vocab) {
  std::string out = std::to_string(seq.label);
  out.push_back('\t');
  for (std::size_t i = 0; i < seq.token_ids.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += vocab.tokens[static_cast<std::size_t>(seq.token_ids[i])];
  }
  return out;
}

Vocabulary build_vocab_from_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::vector<std::string> words;
  std::unordered_map<std::string, bool> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path, line_no, "expected \"label<TAB>tokens\"");
    }
    for (auto& t : tokenize(line.substr(tab + 1))) {
      if (!seen[t]) {
        seen[t] = true;
        words.push_back(t);
      }
    }
  }
  return Vocabulary::with_unk(words);
}

Vector augment_with_bias(const Vector& x) {
  Vector out(x.dim() + 1);
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] = x[i];
  out[x.dim()] = 1.0;
  return out;
}

const SyntheticLexicon& synthetic_lexicon() {
  static const SyntheticLexicon lex = {
      {
          {"terrible", -2}, {"horrible", -2}, {"awful", -2},
          {"bad", -1},      {"poor", -1},     {"dull", -1},
          {"okay", 0},      {"plain", 0},     {"average", 0},
          {"good", 1},      {"nice", 1},      {"solid", 1},
          {"great", 2},     {"wonderful", 2}, {"superb", 2},
      },
      {"very", "extremely", "truly"},
      "not",
  };
  return lex;
}

int synthetic_label(const std::vector<std::string>& tokens, int n_classes) {
  const auto& lex = synthetic_lexicon();
  int score = 0;
  bool negated = false;
  int intensifiers = 0;
  for (const auto& t : tokens) {
    if (t == lex.negator) {
      negated = true;
      continue;
    }
    bool is_intens = false;
    for (const auto& in : lex.intensifiers) {
      if (t == in) {
        is_intens = true;
        break;
      }
    }
    if (is_intens) {
      ++intensifiers;
      continue;
    }
    for (const auto& [word, base] : lex.polarity) {
      if (t == word) {
        score = base;
        break;
      }
    }
  }
  // Each intensifier pushes a non-neutral score one class further out; the
  // negator reflects about neutral. The two commute, so order is irrelevant.
  if (score > 0) score += intensifiers;
  if (score < 0) score -= intensifiers;
  if (negated) score = -score;
  const double neutral = (n_classes - 1) / 2.0;
  long lab = std::lround(neutral + score);
  if (lab < 0) lab = 0;
  if (lab > n_classes - 1) lab = n_classes - 1;
  return static_cast<int>(lab);
}

std::pair<Vocabulary, Corpus> generate_synthetic_corpus(std::uint64_t seed,
                                                        std::size_t n_examples,
                                                        int n_classes) {
  if (n_classes < 2) throw DomainError("generate_synthetic_corpus: need K >= 2");
  if (n_examples < static_cast<std::size_t>(n_classes)) {
    throw DomainError("generate_synthetic_corpus: need n_examples >= K");
  }
  const auto& lex = synthetic_lexicon();

  std::vector<std::string> all;
  for (const auto& [w, s] : lex.polarity) all.push_back(w);
  for (const auto& w : lex.intensifiers) all.push_back(w);
  all.push_back(lex.negator);
  Vocabulary vocab = Vocabulary::with_unk(all);

  Corpus corpus;
  corpus.n_classes = n_classes;
  corpus.split = Split::train;
  corpus.examples.reserve(n_examples);

  Rng rng(seed);
  for (std::size_t i = 0; i < n_examples; ++i) {
    // Phrase patterns: [neg]? [intensifier]{0,2} polarity-word, lengths 1-4.
    const bool negate = rng.index(2) == 1;
    const std::size_t n_intens = rng.index(3);
    std::vector<std::string> toks;
    if (negate) toks.push_back(lex.negator);
    for (std::size_t k = 0; k < n_intens; ++k) {
      toks.push_back(lex.intensifiers[rng.index(lex.intensifiers.size())]);
    }
    toks.push_back(lex.polarity[rng.index(lex.polarity.size())].first);

    LabeledSequence seq;
    seq.label = synthetic_label(toks, n_classes);
    for (const auto& t : toks) seq.token_ids.push_back(vocab.lookup(t));
    corpus.examples.push_back(std::move(seq));
  }
  return {std::move(vocab), std::move(corpus)};
}

}  // namespace mrnn
