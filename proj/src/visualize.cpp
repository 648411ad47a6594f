#include "gate/visualize.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "gate/error.hpp"

namespace gate {

std::vector<double> normalize_weights(std::span<const double> w) {
  if (w.empty()) return {};
  const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
  const double range = *hi - *lo;
  std::vector<double> out(w.size(), 0.5);
  if (range > 0.0) {
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = (w[i] - *lo) / range;
  }
  return out;
}

std::vector<double> accumulate_attention(const Matrix& attention) {
  std::vector<double> out(attention.cols(), 0.0);
  for (std::size_t r = 0; r < attention.rows(); ++r) axpy(1.0, attention.row(r), out);
  return out;
}

ItemRendering render_item(const ModelHyper& hp, const ParameterSet& params, const ModelData& data,
                          std::span<const std::string> item_names, Id item) {
  if (item >= hp.num_items) throw DataError("item " + std::to_string(item) + " is out of range");
  auto name_of = [&](Id i) { return i < item_names.size() ? item_names[i] : std::to_string(i); };
  ItemRendering out;
  out.item = item;
  out.name = name_of(item);

  if (!hp.uses_content()) {
    out.message = "model has no word attention (ablation " + to_string(hp.ablation) + ")";
  } else if (!data.corpus->has_text(item)) {
    out.message = "item has no text";
  } else {
    const auto doc = data.corpus->doc(item);
    const auto att = hp.attention == AttentionMode::kMultiDim ? word_attention_multi(doc, params)
                                                              : word_attention_vanilla(doc, params);
    const auto norm = normalize_weights(accumulate_attention(att.attention));
    for (std::size_t k = 0; k < doc.size(); ++k) {
      out.words.push_back({data.corpus->token(doc[k]), norm[k], norm[k] >= kColorFloor});
    }
  }

  if (hp.uses_neighbors()) {
    const Id batch[] = {item};
    const auto trace = forward(hp, params, data, batch);
    const auto& t = trace.outputs.front();
    for (std::size_t j = 0; j < t.neighbors.size(); ++j) {
      out.neighbors.push_back({t.neighbors[j], name_of(t.neighbors[j]), t.neighbor.weights[j]});
    }
    std::sort(out.neighbors.begin(), out.neighbors.end(), [](const NeighborScore& a, const NeighborScore& b) {
      return a.score != b.score ? a.score > b.score : a.item < b.item;
    });
  }
  return out;
}

namespace {

std::string escape_html(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string render_html(std::span<const ItemRendering> items, const std::map<std::string, std::string>& manifest) {
  std::ostringstream os;
  os << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>attention</title>\n"
     << "<style>body{font-family:sans-serif;max-width:60em;margin:2em auto}"
     << "span.w{padding:0 2px;line-height:1.8}table{border-collapse:collapse}"
     << "td,th{border:1px solid #999;padding:2px 8px}pre{color:#555}</style></head><body>\n";
  os << "<pre>";
  for (const auto& [k, v] : manifest) os << escape_html(k) << " = " << escape_html(v) << "\n";
  os << "</pre>\n";
  for (const auto& it : items) {
    os << "<h2>item " << escape_html(it.name) << "</h2>\n";
    if (!it.message.empty()) os << "<p><em>" << escape_html(it.message) << "</em></p>\n";
    if (!it.words.empty()) {
      os << "<p>";
      for (const auto& w : it.words) {
        if (w.colored) {
          os << "<span class=\"w\" style=\"background:rgba(220,40,40," << fixed(w.weight, 3) << ")\" title=\""
             << fixed(w.weight, 4) << "\">" << escape_html(w.token) << "</span> ";
        } else {
          os << "<span class=\"w\">" << escape_html(w.token) << "</span> ";
        }
      }
      os << "</p>\n";
    }
    if (!it.neighbors.empty()) {
      os << "<table><tr><th>neighbor</th><th>score</th></tr>\n";
      for (const auto& n : it.neighbors)
        os << "<tr><td>" << escape_html(n.name) << "</td><td>" << fixed(n.score, 4) << "</td></tr>\n";
      os << "</table>\n";
    }
  }
  os << "</body></html>\n";
  return os.str();
}

std::string render_terminal(std::span<const ItemRendering> items) {
  std::ostringstream os;
  for (const auto& it : items) {
    os << "== item " << it.name << "\n";
    if (!it.message.empty()) os << "  (" << it.message << ")\n";
    if (!it.words.empty()) {
      std::size_t col = 0;
      os << " ";
      for (const auto& w : it.words) {
        std::string cell = w.colored ? w.token + "[" + fixed(w.weight, 2) + "]" : w.token;
        if (col + cell.size() > 78) {
          os << "\n ";
          col = 0;
        }
        os << " " << cell;
        col += cell.size() + 1;
      }
      os << "\n";
    }
    if (!it.neighbors.empty()) {
      os << "  neighbor                score\n";
      for (const auto& n : it.neighbors) {
        char line[160];
        std::snprintf(line, sizeof line, "  %-22s %.4f\n", n.name.c_str(), n.score);
        os << line;
      }
    }
  }
  return os.str();
}

}  // namespace gate
