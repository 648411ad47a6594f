#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <numeric>

#include "gate/bundle.hpp"
#include "gate/checkpoint.hpp"
#include "gate/error.hpp"
#include "gate/evaluator.hpp"
#include "gate/gradcheck.hpp"
#include "gate/model.hpp"
#include "gate/trainer.hpp"
#include "gate/visualize.hpp"

namespace py = pybind11;
using namespace gate;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Matrix from_numpy(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data().begin());
  return m;
}

std::map<std::string, std::string> stringify(const py::dict& d) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : d) {
    if (py::isinstance<py::bool_>(v)) out[py::str(k)] = v.cast<bool>() ? "true" : "false";
    else out[py::str(k)] = py::str(v);
  }
  return out;
}

struct PyBundle {
  Bundle b;

  const FoldData& fold(std::size_t k) const {
    if (k >= b.folds.size()) throw ConfigError("fold " + std::to_string(k) + " out of range");
    return b.fold(k);
  }
  ModelData data(std::size_t k) const {
    const auto& f = fold(k);
    return {&f.split.train, &b.corpus, &f.graph};
  }
};

struct PyModel {
  ModelHyper hp;
  ParameterSet params;
  std::map<std::string, std::string> metadata;
  TrainLog log;

  void check(const PyBundle& b) const {
    if (hp.num_users != b.b.num_users() || hp.num_items != b.b.num_items() ||
        (hp.uses_content() && hp.vocab_size != b.b.corpus.vocab_size()))
      throw ConfigError("model dimensions do not match the bundle");
  }
  std::vector<Id> items_or_all(std::optional<std::vector<Id>> items) const {
    if (items) return *items;
    std::vector<Id> all(hp.num_items);
    std::iota(all.begin(), all.end(), Id{0});
    return all;
  }
};

ModelHyper hyper_for(const PyBundle& b, const std::map<std::string, std::string>& kv) {
  TrainConfig base;
  base.model.num_users = b.b.num_users();
  base.model.num_items = b.b.num_items();
  base.model.vocab_size = b.b.corpus.vocab_size();
  base.model.max_len = b.b.corpus.max_len();
  return config_from_map(kv, base).model;
}

py::list log_records(const TrainLog& log) {
  py::list out;
  for (const auto& r : log.records) {
    py::dict d;
    d["epoch"] = r.epoch;
    d["mean_loss"] = r.mean_loss;
    d["wall_seconds"] = r.wall_seconds;
    if (r.val_recall) d["val_recall"] = *r.val_recall;
    if (r.val_ndcg) d["val_ndcg"] = *r.val_ndcg;
    out.append(d);
  }
  return out;
}

py::dict metrics_dict(const RankingMetrics& m) {
  py::dict d;
  d["users"] = m.num_users;
  for (std::size_t i = 0; i < m.ks.size(); ++i) {
    d[py::str("recall@" + std::to_string(m.ks[i]))] = m.recall[i];
    d[py::str("ndcg@" + std::to_string(m.ks[i]))] = m.ndcg[i];
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_gate, mod) {
  mod.doc() = "Gated attentive autoencoder recommender";
  mod.attr("__version__") = kToolVersion;

  static py::exception<ConfigError> config_error(mod, "ConfigError", PyExc_ValueError);
  static py::exception<DataError> data_error(mod, "DataError", PyExc_IOError);
  static py::exception<NumericError> numeric_error(mod, "NumericError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const NumericError& e) {
      py::set_error(numeric_error, e.what());
    } catch (const ShapeError& e) {
      py::set_error(PyExc_ValueError, e.what());
    }
  });

  mod.def(
      "preprocess",
      [](const std::filesystem::path& ratings, const std::filesystem::path& documents,
         const std::filesystem::path& out_dir, std::optional<std::filesystem::path> relations, std::uint64_t seed,
         std::size_t folds, double test_frac, double rating_threshold, bool prebinarized,
         std::size_t min_user_ratings, std::size_t min_item_ratings, std::size_t max_vocab, std::size_t min_df,
         std::size_t max_len, const std::string& similarity, double similarity_threshold, std::size_t max_neighbors,
         bool symmetrize) {
        PreprocessOptions o;
        o.seed = seed;
        o.num_folds = folds;
        o.test_frac = test_frac;
        o.rating_threshold = rating_threshold;
        o.prebinarized = prebinarized;
        o.filter = {min_user_ratings, min_item_ratings};
        o.vocab = {max_vocab, min_df, max_len};
        if (similarity == "cosine") o.similarity.metric = SimilarityMetric::kCosine;
        else if (similarity == "jaccard") o.similarity.metric = SimilarityMetric::kJaccard;
        else throw ConfigError("similarity must be cosine or jaccard");
        o.similarity.threshold = similarity_threshold;
        o.similarity.max_neighbors = max_neighbors;
        o.similarity.symmetrize = symmetrize;
        if (folds == 0) throw ConfigError("folds must be >= 1");
        const auto bundle = preprocess(read_raw_inputs(ratings, documents, relations), o);
        write_bundle(out_dir, bundle);
        return bundle.manifest;
      },
      py::arg("ratings"), py::arg("documents"), py::arg("out_dir"), py::kw_only(), py::arg("relations") = py::none(),
      py::arg("seed") = 1, py::arg("folds") = kNumFolds, py::arg("test_frac") = 0.2, py::arg("rating_threshold") = 4.0,
      py::arg("prebinarized") = false, py::arg("min_user_ratings") = 10, py::arg("min_item_ratings") = 5,
      py::arg("max_vocab") = 8000, py::arg("min_df") = 1, py::arg("max_len") = 300, py::arg("similarity") = "cosine",
      py::arg("similarity_threshold") = 0.2, py::arg("max_neighbors") = 50, py::arg("symmetrize") = true,
      "Reads TSV inputs, runs the preprocessing protocol and writes a bundle. Returns its manifest.");

  py::class_<PyBundle>(mod, "Bundle")
      .def(py::init([](const std::filesystem::path& dir) { return PyBundle{read_bundle(dir)}; }), py::arg("dir"))
      .def_property_readonly("num_users", [](const PyBundle& b) { return b.b.num_users(); })
      .def_property_readonly("num_items", [](const PyBundle& b) { return b.b.num_items(); })
      .def_property_readonly("vocab_size", [](const PyBundle& b) { return b.b.corpus.vocab_size(); })
      .def_property_readonly("num_folds", [](const PyBundle& b) { return b.b.folds.size(); })
      .def_property_readonly("manifest", [](const PyBundle& b) { return b.b.manifest; })
      .def_property_readonly("user_names", [](const PyBundle& b) { return b.b.user_names; })
      .def_property_readonly("item_names", [](const PyBundle& b) { return b.b.item_names; })
      .def("document", [](const PyBundle& b, Id item) {
        std::vector<std::string> out;
        for (Id t : b.b.corpus.doc(item)) out.push_back(b.b.corpus.token(t));
        return out;
      }, py::arg("item"))
      .def("train_items", [](const PyBundle& b, std::size_t fold) {
        const auto& r = b.fold(fold).split.train;
        std::vector<std::vector<Id>> out(r.num_users());
        for (Id u = 0; u < r.num_users(); ++u) out[u].assign(r.items_of(u).begin(), r.items_of(u).end());
        return out;
      }, py::arg("fold") = 0, "Per-user training item ids.")
      .def("test_items", [](const PyBundle& b, std::size_t fold) { return b.fold(fold).split.test; },
           py::arg("fold") = 0, "Per-user held-out item ids.")
      .def("neighbors", [](const PyBundle& b, std::size_t fold) { return b.fold(fold).graph.neighbors; },
           py::arg("fold") = 0);

  py::class_<PyModel>(mod, "Model")
      .def(py::init([](const PyBundle& b, py::dict config, std::uint64_t seed) {
        PyModel m;
        m.hp = hyper_for(b, stringify(config));
        m.hp.validate();
        m.params = init_parameters(m.hp, seed);
        return m;
      }), py::arg("bundle"), py::arg("config") = py::dict(), py::arg("seed") = 1,
          "Freshly initialized model sized for `bundle`. `config` uses the trainer's key names.")
      .def_static("load", [](const std::filesystem::path& path) {
        auto ck = load_checkpoint(path);
        PyModel m;
        m.hp = model_from_map(ck.metadata);
        check_parameters(m.hp, ck.params);
        m.params = std::move(ck.params);
        m.metadata = std::move(ck.metadata);
        return m;
      }, py::arg("path"))
      .def("save", [](const PyModel& m, const std::filesystem::path& path) {
        auto meta = m.metadata;
        for (const auto& [k, v] : config_to_map(TrainConfig{m.hp})) meta[k] = v;
        save_checkpoint(path, {m.params, meta});
      }, py::arg("path"))
      .def_property_readonly("config", [](const PyModel& m) {
        std::map<std::string, std::string> out;
        for (const auto& [k, v] : config_to_map(TrainConfig{m.hp})) out[k] = v;
        return out;
      })
      .def_property_readonly("log", [](const PyModel& m) { return log_records(m.log); })
      .def_property_readonly("best_epoch", [](const PyModel& m) { return m.log.best_epoch; })
      .def_property_readonly("param_names", [](const PyModel& m) { return m.params.names(); })
      .def("param", [](const PyModel& m, const std::string& name) { return to_numpy(m.params.value(name)); },
           py::arg("name"))
      .def("set_param", [](PyModel& m, const std::string& name, const Array& a) {
        auto& v = m.params.value(name);
        auto x = from_numpy(a);
        if (x.rows() != v.rows() || x.cols() != v.cols())
          throw ShapeError(name + " expects shape " + v.shape_string());
        v = std::move(x);
      }, py::arg("name"), py::arg("value"))
      .def("predict", [](const PyModel& m, const PyBundle& b, std::size_t fold, std::optional<std::vector<Id>> items) {
        m.check(b);
        const auto ids = m.items_or_all(items);
        const auto tr = forward(m.hp, m.params, b.data(fold), ids);
        Matrix out(m.hp.num_users, ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i)
          for (std::size_t u = 0; u < m.hp.num_users; ++u) out(u, i) = tr.outputs[i].decoded.r_hat[u];
        return to_numpy(out);
      }, py::arg("bundle"), py::arg("fold") = 0, py::arg("items") = py::none(),
         "Reconstructed ratings, users x items, from the fold's training ratings.")
      .def("objective", [](const PyModel& m, const PyBundle& b, std::size_t fold, std::optional<std::vector<Id>> items) {
        m.check(b);
        return objective(m.hp, m.params, b.data(fold), m.items_or_all(items));
      }, py::arg("bundle"), py::arg("fold") = 0, py::arg("items") = py::none())
      .def("gradients", [](const PyModel& m, const PyBundle& b, std::size_t fold, std::optional<std::vector<Id>> items) {
        m.check(b);
        const auto data = b.data(fold);
        const auto g = backward(m.hp, m.params, data, forward(m.hp, m.params, data, m.items_or_all(items)));
        std::map<std::string, Array> out;
        for (const auto& [k, v] : g) out.emplace(k, to_numpy(v));
        return out;
      }, py::arg("bundle"), py::arg("fold") = 0, py::arg("items") = py::none())
      .def("gradient_check", [](PyModel& m, const PyBundle& b, std::size_t fold, std::optional<std::vector<Id>> items,
                                double step, double tol) {
        m.check(b);
        const auto data = b.data(fold);
        const auto ids = m.items_or_all(items);
        const auto g = backward(m.hp, m.params, data, forward(m.hp, m.params, data, ids));
        const ParameterSet frozen = m.params;
        const ParameterSet* fz = m.hp.neighbor_grad == NeighborGrad::kStop ? &frozen : nullptr;
        GradCheckOptions o;
        o.step = step;
        o.tol = tol;
        const auto rep = finite_diff_check([&](const ParameterSet& q) { return objective(m.hp, q, data, ids, fz); },
                                           m.params, g, o);
        py::dict out;
        for (const auto& s : rep.slots) {
          py::dict d;
          d["max_rel_error"] = s.max_rel_error;
          d["max_abs_error"] = s.max_abs_error;
          d["coords"] = s.coords_checked;
          d["passed"] = s.passed;
          out[py::str(s.slot)] = d;
        }
        return out;
      }, py::arg("bundle"), py::arg("fold") = 0, py::arg("items") = py::none(), py::arg("step") = 1e-5,
         py::arg("tol") = 1e-4, "Central-difference check of every parameter slot.")
      .def("evaluate", [](const PyModel& m, const PyBundle& b, std::size_t fold, std::vector<std::size_t> ks) {
        m.check(b);
        const auto& f = b.fold(fold);
        const auto sink = score_all(m.hp, m.params, f.split.train, &b.b.corpus, &f.graph);
        return metrics_dict(evaluate_ranking(sink, f.split.test, ks));
      }, py::arg("bundle"), py::arg("fold") = 0, py::arg("ks") = kDefaultKs)
      .def("attention", [](const PyModel& m, const PyBundle& b, Id item) {
        m.check(b);
        if (!m.hp.uses_content()) throw ConfigError("model has no word attention");
        const auto doc = b.b.corpus.doc(item);
        const auto wa = m.hp.attention == AttentionMode::kVanilla ? word_attention_vanilla(doc, m.params)
                                                                  : word_attention_multi(doc, m.params);
        return to_numpy(wa.attention);
      }, py::arg("bundle"), py::arg("item"), "Word attention matrix (rows x document tokens).")
      .def("render_attention", [](const PyModel& m, const PyBundle& b, std::size_t fold, std::vector<Id> items) {
        m.check(b);
        std::vector<ItemRendering> r;
        for (Id i : items) r.push_back(render_item(m.hp, m.params, b.data(fold), b.b.item_names, i));
        return render_html(r, b.b.manifest);
      }, py::arg("bundle"), py::arg("fold"), py::arg("items"), "Self-contained HTML page.");

  mod.def(
      "train",
      [](const PyBundle& b, std::size_t fold, py::dict config, std::optional<std::filesystem::path> checkpoint_dir) {
        TrainConfig base;
        base.model.num_users = b.b.num_users();
        base.model.num_items = b.b.num_items();
        base.model.vocab_size = b.b.corpus.vocab_size();
        base.model.max_len = b.b.corpus.max_len();
        auto cfg = config_from_map(stringify(config), base);
        if (checkpoint_dir) cfg.checkpoint_dir = *checkpoint_dir;
        cfg = validate_config(cfg);
        const auto& f = b.fold(fold);
        TrainResult res;
        {
          py::gil_scoped_release release;
          res = train(f.split, b.b.corpus, f.graph, cfg);
        }
        PyModel m;
        m.hp = cfg.model;
        m.params = std::move(res.params);
        m.log = std::move(res.log);
        m.metadata = config_to_map(cfg);
        m.metadata["dataset_fingerprint"] = b.b.manifest.at("dataset_fingerprint");
        m.metadata["fold"] = std::to_string(fold);
        return m;
      },
      py::arg("bundle"), py::arg("fold") = 0, py::arg("config") = py::dict(), py::arg("checkpoint_dir") = py::none(),
      "Trains on one fold. `config` takes the trainer's key names (epochs, lr, rho, ...).");

  mod.def(
      "ranking_metrics",
      [](const Array& scores, const std::vector<std::vector<Id>>& train, const std::vector<std::vector<Id>>& test,
         std::vector<std::size_t> ks) {
        const auto s = from_numpy(scores);
        std::vector<Interaction> pairs;
        for (std::size_t u = 0; u < train.size(); ++u)
          for (Id i : train[u]) pairs.push_back({static_cast<Id>(u), i});
        std::sort(pairs.begin(), pairs.end());
        const SparseBinaryRatings r(s.rows(), s.cols(), pairs);
        return metrics_dict(evaluate_ranking(ScoreSink::dense(s, r), test, ks));
      },
      py::arg("scores"), py::arg("train"), py::arg("test"), py::arg("ks") = kDefaultKs,
      "Recall@k and NDCG@k of a users x items score matrix, excluding each user's train items.");
}
