// mse: search for minimal sufficient explanations, export attention graphs
// and run corpus statistics from the command line.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mse/attention.hpp"
#include "mse/diversity.hpp"
#include "mse/export.hpp"
#include "mse/harness.hpp"
#include "mse/image_io.hpp"
#include "mse/remote.hpp"
#include "mse/sag.hpp"
#include "mse/search.hpp"

using namespace mse;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ModelOptions {
    std::string endpoint;
    std::string synthetic;
    double timeout = 30.0;
    int r = 7;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--endpoint", endpoint, "Model server URL (default: $SAG_MODEL_ENDPOINT)");
        cmd.add_option("--synthetic", synthetic,
                       "Use a synthetic DNF classifier instead of a server, terms as \"3,7;20,21,22\"");
        cmd.add_option("--timeout", timeout, "Server timeout in seconds")->check(CLI::PositiveNumber);
        cmd.add_option("--r", r, "Grid side")->check(CLI::Range(1, kMaxGridSide));
    }

    std::vector<PatchSet> terms() const {
        std::vector<PatchSet> out;
        std::stringstream all(synthetic);
        std::string term;
        while (std::getline(all, term, ';')) {
            std::vector<int> patches;
            std::stringstream items(term);
            std::string item;
            while (std::getline(items, item, ','))
                if (!item.empty()) patches.push_back(std::stoi(item));
            if (!patches.empty()) out.push_back(PatchSet::of(r, patches));
        }
        if (out.empty()) throw std::invalid_argument("--synthetic: no terms in \"" + synthetic + "\"");
        return out;
    }

    /// Synthetic classifiers are bound to the image they explain; a server
    /// is shared.
    ClassifierFactory factory() const {
        if (!synthetic.empty()) {
            const auto t = terms();
            return [t, r = r](const fs::path&, const Image& img) -> std::shared_ptr<const Classifier> {
                return std::make_shared<SyntheticMonotoneDnf>(img, r, t);
            };
        }
        std::string url = endpoint;
        if (url.empty()) url = endpoint_from_env().value_or("");
        if (url.empty()) throw std::invalid_argument("no classifier: pass --endpoint, --synthetic or set SAG_MODEL_ENDPOINT");
        RemoteConfig cfg;
        cfg.endpoint = url;
        cfg.timeout_seconds = timeout;
        std::shared_ptr<const Classifier> remote = std::make_shared<RemoteClassifier>(cfg);
        return [remote](const fs::path&, const Image&) { return remote; };
    }
};

/// Image at the resolution the classifier scores.
Image model_view(const Image& image, const Classifier& clf) {
    if (auto size = clf.input_size()) return resize_bilinear(image, size->first, size->second);
    return image;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stoi(item));
    return out;
}

json record_to_json(const MseRecord& rec) {
    return {{"id", std::to_string(rec.set.bits())},
            {"patches", rec.set.indices()},
            {"confidence", rec.confidence},
            {"minimal", rec.minimal}};
}

struct SearchOptions {
    ModelOptions model;
    std::string method = "beam";
    SearchConfig config;
    std::string mode = "black";
    double sigma = 10.0;
    std::string attention;
    std::string image;
    std::optional<int> class_index;
    std::string out;
};

int run_search(const SearchOptions& opt) {
    SearchConfig cfg = opt.config;
    cfg.r = opt.model.r;
    cfg.mode = opt.mode == "blur" ? PerturbationMode::blur(opt.sigma) : PerturbationMode::black();
    cfg.validate();

    const Image original = read_image(opt.image);
    const auto clf = opt.model.factory()(opt.image, original);
    const Image image = model_view(original, *clf);
    EvalCache cache(*clf, image, cfg.r);
    const int cls = opt.class_index ? *opt.class_index : argmax(cache.scores(PatchSet::full(cfg.r), cfg.mode));
    if (cls < 0 || cls >= clf->num_classes()) throw std::invalid_argument("--class out of range");
    const auto ctx = make_context(cache, cls, cfg);

    const CoarseAttention att = opt.attention.empty()
                                    ? occlusion_attention(cache, cls, cfg.mode)
                                    : pool_attention(resize_bilinear(load_heatmap(opt.attention), image.height,
                                                                     image.width),
                                                     cache.grid());
    SearchStats stats;
    const auto found = opt.method == "comb" ? combinatorial_search(att, ctx, cfg, &stats)
                                            : beam_search(att, ctx, cfg, &stats);

    json doc{{"image", opt.image},
             {"method", opt.method == "comb" ? "CombS" : "BeamS-" + std::to_string(cfg.beam_width)},
             {"r", cfg.r},
             {"class", cls},
             {"mode", cfg.mode.to_string()},
             {"p_high", cfg.p_high},
             {"base_confidence", ctx.base_confidence()},
             {"attention", opt.attention.empty() ? "occlusion" : opt.attention},
             {"classifier_calls", cache.classifier_calls()},
             {"mses", json::array()},
             {"discarded_non_minimal", json::array()}};
    for (const auto& rec : found) doc["mses"].push_back(record_to_json(rec));
    for (const auto& s : stats.discarded_non_minimal) doc["discarded_non_minimal"].push_back(s.to_string());

    const std::string text = doc.dump(2) + "\n";
    if (opt.out.empty()) {
        std::cout << text;
    } else {
        std::ofstream(opt.out) << text;
        std::cerr << found.size() << " MSEs for class " << cls << " (" << cache.classifier_calls()
                  << " classifier calls) -> " << opt.out << "\n";
    }
    return 0;
}

struct ExportOptions {
    ModelOptions model;
    std::string format = "json";
    std::string results;
    std::string image;
    std::string out;
    int c = 3;
    double p_low = 0.4;
};

int run_export(const ExportOptions& opt) {
    std::ifstream in(opt.results);
    if (!in) throw std::runtime_error("cannot read " + opt.results);
    const json doc = json::parse(in);
    ModelOptions model = opt.model;
    model.r = doc.at("r").get<int>();

    const std::string image_path = opt.image.empty() ? doc.at("image").get<std::string>() : opt.image;
    const Image original = read_image(image_path);
    const auto clf = model.factory()(image_path, original);
    const Image image = model_view(original, *clf);

    std::vector<MseRecord> records;
    for (const auto& m : doc.at("mses")) {
        const auto patches = m.at("patches").get<std::vector<int>>();
        records.push_back({PatchSet::of(model.r, patches), m.at("confidence").get<double>(),
                           doc.at("base_confidence").get<double>(), m.value("minimal", true)});
    }
    if (records.empty()) throw std::runtime_error("no MSEs in " + opt.results + ", nothing to export");

    EvalCache cache(*clf, image, model.r);
    const SearchContext ctx(cache, doc.at("class").get<int>(), doc.at("p_high").get<double>(),
                            PerturbationMode::parse(doc.at("mode").get<std::string>()));
    const SagGraph graph = build_sag(select_diverse(records, opt.c), ctx, opt.p_low);

    const fs::path out = opt.out;
    if (opt.format == "json") {
        export_json(graph, out);
    } else if (opt.format == "dot") {
        export_dot(graph, image, out);
    } else {
        export_html(graph, image, out);
    }
    std::cerr << graph.nodes.size() << " nodes, " << graph.edge_count() << " edges -> " << out.string() << "\n";
    return 0;
}

struct StatsOptions {
    ModelOptions model;
    std::string images;
    std::string out;
    std::string methods = "beam";
    std::string widths = "3,15";
    std::string overlaps = "0,1";
    std::string mode = "black";
    double sigma = 10.0;
    bool compare = false;
    bool graphs = true;
    int workers = 0;
};

int run_stats(const StatsOptions& opt) {
    HarnessConfig cfg;
    cfg.search.r = opt.model.r;
    cfg.search.mode = opt.mode == "blur" ? PerturbationMode::blur(opt.sigma) : PerturbationMode::black();
    cfg.overlap_levels = parse_int_list(opt.overlaps);
    cfg.write_graphs = opt.graphs;
    cfg.workers = opt.workers;
    cfg.methods.clear();
    std::stringstream ss(opt.methods);
    std::string m;
    while (std::getline(ss, m, ',')) {
        if (m == "comb") {
            cfg.methods.push_back(MethodSpec::parse("comb"));
        } else if (m == "beam") {
            for (int w : parse_int_list(opt.widths)) cfg.methods.push_back(MethodSpec::parse("beam-" + std::to_string(w)));
        } else if (!m.empty()) {
            cfg.methods.push_back(MethodSpec::parse(m));
        }
    }
    if (cfg.methods.empty()) throw std::invalid_argument("--methods selects nothing");

    std::vector<CorpusError> errors;
    const auto items = load_corpus(opt.images, opt.model.factory(), errors);
    const fs::path out = opt.out;

    if (opt.compare) {
        const auto cmp = compare_perturbation(items, cfg, opt.sigma, out / "perturbation.csv");
        std::cout << cmp.images << " images compared -> " << (out / "perturbation.csv").string() << "\n";
        return 0;
    }
    const auto report = run_corpus(items, cfg, out, errors);
    std::cout << report.image_count() << " images, " << report.errors.size() << " errors\n";
    for (const auto& method : report.methods) {
        for (int overlap : cfg.overlap_levels) {
            const auto all = diversity_stats(report, method, overlap, true);
            const auto found = diversity_stats(report, method, overlap, false);
            std::cout << method << " overlap " << overlap << ": mean " << all.mean << " variance " << all.variance
                      << " mode " << all.mode << " (images with an MSE: mean " << found.mean << ", mode "
                      << found.mode << ")\n";
        }
    }
    std::cout << "reports in " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Minimal sufficient explanations and structured attention graphs"};
    app.require_subcommand(1);

    SearchOptions search;
    auto* s = app.add_subcommand("search", "Find MSEs for one image");
    search.model.add_to(*s);
    s->add_option("--method", search.method, "comb or beam")->check(CLI::IsMember({"comb", "beam"}));
    s->add_option("--k", search.config.k, "Subset size for comb");
    s->add_option("--w", search.config.beam_width, "Beam width");
    s->add_option("--q", search.config.expansions, "Expansions per beam state");
    s->add_option("--m", search.config.m, "Pool size for comb");
    s->add_option("--ph", search.config.p_high, "Sufficiency fraction");
    s->add_option("--mode", search.mode, "black or blur")->check(CLI::IsMember({"black", "blur"}));
    s->add_option("--sigma", search.sigma, "Blur sigma")->check(CLI::PositiveNumber);
    s->add_option("--attention", search.attention, "Heatmap file (.csv, .txt or grayscale image)");
    s->add_option("--image", search.image, "Input image")->required();
    s->add_option("--class", search.class_index, "Class to explain (default: top class)");
    s->add_option("--out", search.out, "Results file (default: stdout)");

    ExportOptions exp;
    auto* e = app.add_subcommand("export", "Build the attention graph for search results and write it");
    exp.model.add_to(*e);
    e->add_option("--format", exp.format, "json, dot or html")->check(CLI::IsMember({"json", "dot", "html"}));
    e->add_option("--results", exp.results, "Output of `mse search`")->required();
    e->add_option("--image", exp.image, "Image (default: the one named in the results)");
    e->add_option("--out", exp.out, "Output file (json, html) or directory (dot)")->required();
    e->add_option("--c", exp.c, "Number of diverse roots")->check(CLI::PositiveNumber);
    e->add_option("--pl", exp.p_low, "Expansion floor")->check(CLI::Range(0.0, 1.0));

    StatsOptions stats;
    auto* st = app.add_subcommand("stats", "Coverage and diversity statistics over a directory of images");
    stats.model.add_to(*st);
    st->add_option("--images", stats.images, "Image directory")->required();
    st->add_option("--out", stats.out, "Report directory")->required();
    st->add_option("--methods", stats.methods, "Comma list of comb, beam or beam-<w>");
    st->add_option("--widths", stats.widths, "Beam widths used for `beam`");
    st->add_option("--overlap-levels", stats.overlaps, "Comma list of overlaps for count_diverse");
    st->add_option("--mode", stats.mode, "black or blur")->check(CLI::IsMember({"black", "blur"}));
    st->add_option("--sigma", stats.sigma, "Blur sigma")->check(CLI::PositiveNumber);
    st->add_flag("--compare", stats.compare, "Run black and blur side by side instead");
    st->add_flag("!--no-graphs", stats.graphs, "Skip per-image graph files");
    st->add_option("--workers", stats.workers, "Worker threads (0: all cores)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (s->parsed()) return run_search(search);
        if (e->parsed()) return run_export(exp);
        return run_stats(stats);
    } catch (const std::exception& ex) {
        std::cerr << "mse: " << ex.what() << "\n";
        return 1;
    }
}
