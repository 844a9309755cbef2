#include "retro/iterate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "retro/embedding_provider.hpp"
#include "retro/error.hpp"
#include "retro/rng.hpp"

namespace retro::iterate {

using nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

// N-grams are built inside each text segment (question, each option), so
// no gram spans the boundary between two options.
std::vector<std::string> entry_segments(const data::Entry& e) {
  std::vector<std::string> segments;
  segments.push_back(e.question);
  for (const auto& opt : e.options) segments.push_back(opt);
  return segments;
}

struct GramCounts {
  std::map<std::string, long> total;
  std::map<std::string, long> docs;
  long corpus_tokens = 0;
};

GramCounts count_grams(const data::Dataset& ds, int n) {
  GramCounts counts;
  for (const auto& e : ds.entries) {
    std::set<std::string> seen_here;
    for (const auto& segment : entry_segments(e)) {
      auto tokens = tokenize(segment);
      counts.corpus_tokens += static_cast<long>(tokens.size());
      if (static_cast<int>(tokens.size()) < n) continue;
      for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string gram = tokens[i];
        for (int j = 1; j < n; ++j) gram += " " + tokens[i + j];
        ++counts.total[gram];
        seen_here.insert(std::move(gram));
      }
    }
    for (const auto& gram : seen_here) ++counts.docs[gram];
  }
  return counts;
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

} // namespace

NgramReport ngram_diff(const data::DatasetPair& pair, int n, std::size_t top) {
  if (n != 1 && n != 2) raise(ErrorKind::validation, "ngram_diff supports n in {1, 2}");
  GramCounts target = count_grams(pair.target, n);
  GramCounts retro = count_grams(pair.retro, n);

  NgramReport report;
  report.n = n;
  report.corpus_tokens_target = target.corpus_tokens;
  report.corpus_tokens_retro = retro.corpus_tokens;

  std::set<std::string> grams;
  for (const auto& [g, _] : target.total) grams.insert(g);
  for (const auto& [g, _] : retro.total) grams.insert(g);

  double t_tokens = std::max(1L, target.corpus_tokens);
  double r_tokens = std::max(1L, retro.corpus_tokens);
  double t_docs = std::max<std::size_t>(1, pair.target.size());
  double r_docs = std::max<std::size_t>(1, pair.retro.size());

  for (const auto& g : grams) {
    NgramRow row;
    row.gram = g;
    auto lookup = [](const std::map<std::string, long>& m, const std::string& key) {
      auto it = m.find(key);
      return it == m.end() ? 0L : it->second;
    };
    row.total_target = lookup(target.total, g);
    row.total_retro = lookup(retro.total, g);
    row.doc_target = lookup(target.docs, g);
    row.doc_retro = lookup(retro.docs, g);
    row.delta_total = row.total_target / t_tokens - row.total_retro / r_tokens;
    row.delta_doc = row.doc_target / t_docs - row.doc_retro / r_docs;
    if (row.delta_total == 0.0 && row.delta_doc == 0.0) continue;
    report.rows.push_back(std::move(row));
  }

  std::sort(report.rows.begin(), report.rows.end(), [](const NgramRow& a, const NgramRow& b) {
    double da = std::fabs(a.delta_total), db = std::fabs(b.delta_total);
    if (da != db) return da > db;
    return a.gram < b.gram;
  });
  if (report.rows.size() > top) report.rows.resize(top);
  return report;
}

std::string ngram_report_to_json(const NgramReport& report) {
  json j;
  j["n"] = report.n;
  j["corpus_tokens_target"] = report.corpus_tokens_target;
  j["corpus_tokens_retro"] = report.corpus_tokens_retro;
  j["rows"] = json::array();
  for (const auto& r : report.rows) {
    j["rows"].push_back({{"gram", r.gram},
                         {"total_target", r.total_target},
                         {"total_retro", r.total_retro},
                         {"doc_target", r.doc_target},
                         {"doc_retro", r.doc_retro},
                         {"delta_total", r.delta_total},
                         {"delta_doc", r.delta_doc}});
  }
  return j.dump(2) + "\n";
}

std::string ngram_report_to_markdown(const NgramReport& report) {
  std::ostringstream md;
  md << "| " << report.n << "-gram | total (target) | total (retro) | docs (target) | docs (retro) "
        "| delta total | delta doc |\n";
  md << "|---|---|---|---|---|---|---|\n";
  for (const auto& r : report.rows) {
    md << "| " << r.gram << " | " << r.total_target << " | " << r.total_retro << " | "
       << r.doc_target << " | " << r.doc_retro << " | " << fmt(r.delta_total) << " | "
       << fmt(r.delta_doc) << " |\n";
  }
  return md.str();
}

namespace {

std::vector<const embed::EmbeddingVector*> dataset_vectors(
    const data::Dataset& ds, const std::map<std::string, embed::EmbeddingVector>& embeddings) {
  std::vector<const embed::EmbeddingVector*> out;
  out.reserve(ds.entries.size());
  for (const auto& e : ds.entries) {
    auto it = embeddings.find(e.id);
    if (it == embeddings.end())
      raise(ErrorKind::validation, "missing embedding for entry \"" + e.id + "\"");
    out.push_back(&it->second);
  }
  return out;
}

} // namespace

Histogram internal_similarity_histogram(
    const data::Dataset& ds, const std::map<std::string, embed::EmbeddingVector>& embeddings,
    int bins) {
  if (ds.size() < 2)
    raise(ErrorKind::degenerate_input, "similarity histogram needs at least 2 entries");
  if (bins < 1) raise(ErrorKind::validation, "histogram needs at least 1 bin");
  auto vecs = dataset_vectors(ds, embeddings);

  Histogram h;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b)
    h.edges[b] = -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(bins);
  h.counts.assign(static_cast<std::size_t>(bins), 0);

  for (std::size_t i = 0; i < vecs.size(); ++i) {
    for (std::size_t j = i + 1; j < vecs.size(); ++j) {
      double c = embed::cosine(*vecs[i], *vecs[j]);
      int b = static_cast<int>((c + 1.0) / 2.0 * bins);
      if (b == bins) b = bins - 1; // c == 1.0 lands in the last bin
      ++h.counts[static_cast<std::size_t>(b)];
      ++h.pair_count;
    }
  }
  h.density.resize(h.counts.size());
  double bin_width = 2.0 / bins;
  for (std::size_t b = 0; b < h.counts.size(); ++b)
    h.density[b] = static_cast<double>(h.counts[b]) /
                   (static_cast<double>(h.pair_count) * bin_width);
  return h;
}

std::string histogram_to_csv(const Histogram& h) {
  std::string out = "bin_lo,bin_hi,count,density\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    out += fmt(h.edges[b], "%.17g");
    out += ",";
    out += fmt(h.edges[b + 1], "%.17g");
    out += ",";
    out += std::to_string(h.counts[b]);
    out += ",";
    out += fmt(h.density[b], "%.17g");
    out += "\n";
  }
  return out;
}

std::string histogram_to_svg(const Histogram& h, const std::string& title) {
  const int W = 640, H = 400, ml = 50, mr = 20, mt = 30, mb = 40;
  double max_density = 1e-12;
  for (double d : h.density) max_density = std::max(max_density, d);
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << title
    << "</text>\n";
  double plot_w = W - ml - mr, plot_h = H - mt - mb;
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    double x = ml + (h.edges[b] + 1.0) / 2.0 * plot_w;
    double w = (h.edges[b + 1] - h.edges[b]) / 2.0 * plot_w;
    double bar_h = h.density[b] / max_density * plot_h;
    s << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(mt + plot_h - bar_h) << "\" width=\""
      << fmt(w) << "\" height=\"" << fmt(bar_h) << "\" fill=\"#4477aa\" stroke=\"white\"/>\n";
  }
  s << "<line x1=\"" << ml << "\" y1=\"" << (H - mb) << "\" x2=\"" << (W - mr) << "\" y2=\""
    << (H - mb) << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << ml << "\" y=\"" << (H - mb + 16) << "\" font-size=\"11\">-1</text>\n";
  s << "<text x=\"" << (W - mr) << "\" y=\"" << (H - mb + 16)
    << "\" font-size=\"11\" text-anchor=\"end\">1</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::vector<SimilarPair> top_similar_pairs(
    const data::Dataset& ds, const std::map<std::string, embed::EmbeddingVector>& embeddings,
    std::size_t k) {
  if (ds.size() < 2) raise(ErrorKind::degenerate_input, "top pairs needs at least 2 entries");
  auto vecs = dataset_vectors(ds, embeddings);

  std::vector<SimilarPair> pairs;
  pairs.reserve(ds.size() * (ds.size() - 1) / 2);
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    for (std::size_t j = i + 1; j < vecs.size(); ++j) {
      SimilarPair p;
      p.id_a = ds.entries[i].id;
      p.id_b = ds.entries[j].id;
      p.cosine = embed::cosine(*vecs[i], *vecs[j]);
      pairs.push_back(std::move(p));
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const SimilarPair& a, const SimilarPair& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    if (a.id_a != b.id_a) return a.id_a < b.id_a;
    return a.id_b < b.id_b;
  });
  if (pairs.size() > k) pairs.resize(k);

  std::map<std::string, const data::Entry*> by_id;
  for (const auto& e : ds.entries) by_id[e.id] = &e;
  for (auto& p : pairs) {
    p.text_a = data::canonical_text(*by_id[p.id_a]).text;
    p.text_b = data::canonical_text(*by_id[p.id_b]).text;
  }
  return pairs;
}

std::string pairs_to_json(const std::vector<SimilarPair>& pairs) {
  json j = json::array();
  for (const auto& p : pairs) {
    j.push_back({{"id_a", p.id_a},
                 {"id_b", p.id_b},
                 {"cosine", p.cosine},
                 {"text_a", p.text_a},
                 {"text_b", p.text_b}});
  }
  return j.dump(2) + "\n";
}

std::string pairs_to_markdown(const std::vector<SimilarPair>& pairs) {
  std::ostringstream md;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    md << "## Pair " << (i + 1) << " (cosine = " << fmt(p.cosine) << ")\n\n";
    md << "**" << p.id_a << "**\n\n```\n" << p.text_a << "\n```\n\n";
    md << "**" << p.id_b << "**\n\n```\n" << p.text_b << "\n```\n\n";
  }
  return md.str();
}

namespace {

// Leading eigenvector of X^T X / (n-1) for the centered data matrix X,
// orthogonalized against previously found components each iteration.
std::vector<double> power_iteration(const std::vector<std::vector<double>>& X,
                                    const std::vector<std::vector<double>>& found,
                                    std::uint64_t seed, double tol, int max_iters) {
  const std::size_t n = X.size();
  const std::size_t d = X.front().size();
  rng::CounterRng gen(seed, rng::derive_seed(0, "pca_start"));
  std::vector<double> v(d);
  for (auto& x : v) x = gen.next_gaussian();

  auto orthogonalize = [&](std::vector<double>& u) {
    for (const auto& pc : found) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += u[j] * pc[j];
      for (std::size_t j = 0; j < d; ++j) u[j] -= dot * pc[j];
    }
  };
  auto normalize = [&](std::vector<double>& u) {
    double norm = 0.0;
    for (double x : u) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-300) raise(ErrorKind::degenerate_input, "projection: zero-variance direction");
    for (double& x : u) x /= norm;
  };
  orthogonalize(v);
  normalize(v);

  std::vector<double> xv(n), next(d);
  for (int it = 0; it < max_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += X[i][j] * v[j];
      xv[i] = s;
    }
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) next[j] += X[i][j] * xv[i];
    }
    orthogonalize(next);
    normalize(next);
    double diff = 0.0;
    double sign = 0.0;
    for (std::size_t j = 0; j < d; ++j) sign += next[j] * v[j];
    double flip = sign < 0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      double delta = next[j] - flip * v[j];
      diff += delta * delta;
    }
    v = next;
    if (std::sqrt(diff) < tol) break;
  }
  return v;
}

} // namespace

std::vector<ProjectionPoint> project_2d(
    const data::DatasetPair& pair, const std::map<std::string, embed::EmbeddingVector>& target_emb,
    const std::map<std::string, embed::EmbeddingVector>& retro_emb, std::uint64_t seed) {
  auto pooled = embed::pool_pair(pair, target_emb, retro_emb);
  const std::size_t n = pooled.vectors.size();
  if (n < 3) raise(ErrorKind::degenerate_input, "projection needs at least 3 pooled entries");
  const std::size_t d = pooled.vectors.front().dim();
  for (const auto& v : pooled.vectors)
    if (v.dim() != d) raise(ErrorKind::mismatch, "projection: mixed embedding dimensions");

  std::vector<std::vector<double>> X(n, std::vector<double>(d));
  std::vector<double> mean(d, 0.0);
  for (const auto& v : pooled.vectors)
    for (std::size_t j = 0; j < d; ++j) mean[j] += v.values[j];
  for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
  double total_var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      X[i][j] = pooled.vectors[i].values[j] - mean[j];
      total_var += X[i][j] * X[i][j];
    }
  }
  if (total_var < 1e-18)
    raise(ErrorKind::degenerate_input, "projection: all embeddings identical (zero variance)");

  constexpr double kTol = 1e-9;
  constexpr int kMaxIters = 1000;
  std::vector<std::vector<double>> components;
  components.push_back(power_iteration(X, components, seed, kTol, kMaxIters));
  components.push_back(power_iteration(X, components, seed + 1, kTol, kMaxIters));

  std::vector<ProjectionPoint> points;
  points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ProjectionPoint p;
    p.id = pooled.ids[i];
    p.role = i < pooled.n_target ? "target" : "retro";
    for (std::size_t j = 0; j < d; ++j) {
      p.x += X[i][j] * components[0][j];
      p.y += X[i][j] * components[1][j];
    }
    points.push_back(std::move(p));
  }
  return points;
}

std::string projection_to_csv(const std::vector<ProjectionPoint>& points) {
  std::string out = "id,role,x,y\n";
  for (const auto& p : points) {
    out += p.id;
    out += ",";
    out += p.role;
    out += ",";
    out += fmt(p.x, "%.17g");
    out += ",";
    out += fmt(p.y, "%.17g");
    out += "\n";
  }
  return out;
}

std::string projection_to_svg(const std::vector<ProjectionPoint>& points) {
  const int W = 640, H = 640, margin = 40;
  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  for (const auto& p : points) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  double span = std::max({max_x - min_x, max_y - min_y, 1e-9});
  auto sx = [&](double x) { return margin + (x - min_x) / span * (W - 2 * margin); };
  auto sy = [&](double y) { return H - margin - (y - min_y) / span * (H - 2 * margin); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& p : points) {
    const char* color = p.role == "target" ? "#4477aa" : "#cc6677";
    s << "<circle cx=\"" << fmt(sx(p.x)) << "\" cy=\"" << fmt(sy(p.y)) << "\" r=\"3.5\" fill=\""
      << color << "\" fill-opacity=\"0.75\"/>\n";
  }
  s << "<circle cx=\"20\" cy=\"20\" r=\"4\" fill=\"#4477aa\"/><text x=\"30\" y=\"24\" "
       "font-size=\"12\">target</text>\n";
  s << "<circle cx=\"20\" cy=\"40\" r=\"4\" fill=\"#cc6677\"/><text x=\"30\" y=\"44\" "
       "font-size=\"12\">retro</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string embeddings_to_csv(const data::DatasetPair& pair,
                              const std::map<std::string, embed::EmbeddingVector>& target_emb,
                              const std::map<std::string, embed::EmbeddingVector>& retro_emb) {
  auto pooled = embed::pool_pair(pair, target_emb, retro_emb);
  std::string out = "id,role";
  const std::size_t d = pooled.vectors.empty() ? 0 : pooled.vectors.front().dim();
  for (std::size_t j = 0; j < d; ++j) out += ",v" + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < pooled.vectors.size(); ++i) {
    out += pooled.ids[i];
    out += i < pooled.n_target ? ",target" : ",retro";
    for (double x : pooled.vectors[i].values) {
      out += ",";
      out += fmt(x, "%.17g");
    }
    out += "\n";
  }
  return out;
}

} // namespace retro::iterate
