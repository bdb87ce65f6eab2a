#include "vlcl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"
#include "vlcl/error.hpp"

namespace vlcl::config {

using nlohmann::json;

namespace {

template <class T>
bool holds(const json& v) {
    if constexpr (std::is_same_v<T, bool>) {
        return v.is_boolean();
    } else if constexpr (std::is_integral_v<T>) {
        return v.is_number_unsigned();
    } else if constexpr (std::is_floating_point_v<T>) {
        return v.is_number();
    } else {
        return v.is_string();
    }
}

template <class T>
const char* type_name() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_integral_v<T>) return "a non-negative integer";
    else if constexpr (std::is_floating_point_v<T>) return "a number";
    else return "a string";
}

// Reads the keys of one JSON object and remembers which were used, so that
// finish() can reject the rest.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
    }

    template <class T>
    void get(const std::string& key, T& out) {
        const json* v = find(key);
        if (v == nullptr) return;
        if (!holds<T>(*v)) throw ConfigError(where(key) + " must be " + type_name<T>());
        out = v->get<T>();
    }

    template <class T>
    void get_list(const std::string& key, std::vector<T>& out) {
        const json* v = find(key);
        if (v == nullptr) return;
        if (!v->is_array()) throw ConfigError(where(key) + " must be an array");
        std::vector<T> values;
        for (const auto& e : *v) {
            if (!holds<T>(e)) throw ConfigError(where(key) + " entries must be " + type_name<T>());
            values.push_back(e.get<T>());
        }
        out = std::move(values);
    }

    void get_path(const std::string& key, std::filesystem::path& out) {
        std::string s;
        if (find(key) == nullptr) return;
        get(key, s);
        out = s;
    }

    // Optional nested object; nullptr when absent.
    const json* child(const std::string& key) { return find(key); }

    std::string where(const std::string& key) const { return path_ + "." + key; }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.contains(item.key())) throw ConfigError("unknown key " + where(item.key()));
        }
    }

private:
    const json* find(const std::string& key) {
        auto it = j_.find(key);
        if (it == j_.end()) return nullptr;
        seen_.insert(key);
        return &*it;
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

json source_json(const DataSource& s) {
    if (s.kind == DataSource::Kind::folder) {
        return {{"kind", "folder"}, {"path", s.folder.string()}, {"image_size", s.image_size}};
    }
    const auto& g = s.synthetic;
    return {{"kind", "synthetic"},
            {"num_coarse_classes", g.num_coarse_classes},
            {"subcats_per_class", g.subcats_per_class},
            {"samples_per_subcat", g.samples_per_subcat},
            {"image_size", g.image_size},
            {"noise_std", g.noise_std},
            {"hue_jitter", g.hue_jitter},
            {"seed", g.seed},
            {"first_class", g.first_class}};
}

void read_source(const json& j, const std::string& path, DataSource& s) {
    Section sec(j, path);
    std::string kind = s.kind == DataSource::Kind::folder ? "folder" : "synthetic";
    sec.get("kind", kind);
    if (kind == "synthetic") {
        s.kind = DataSource::Kind::synthetic;
        auto& g = s.synthetic;
        sec.get("num_coarse_classes", g.num_coarse_classes);
        sec.get("subcats_per_class", g.subcats_per_class);
        sec.get("samples_per_subcat", g.samples_per_subcat);
        sec.get("image_size", g.image_size);
        sec.get("noise_std", g.noise_std);
        sec.get("hue_jitter", g.hue_jitter);
        sec.get("seed", g.seed);
        sec.get("first_class", g.first_class);
        s.image_size = g.image_size;
    } else if (kind == "folder") {
        s.kind = DataSource::Kind::folder;
        sec.get_path("path", s.folder);
        sec.get("image_size", s.image_size);
    } else {
        throw ConfigError(sec.where("kind") + " must be \"synthetic\" or \"folder\", got \"" + kind + "\"");
    }
    sec.finish();
}

json eval_json(const evaluation::EvalSettings& e) {
    return {{"n_way", e.n_way},
            {"k_shot", e.k_shot},
            {"queries_per_class", e.queries_per_class},
            {"episodes", e.episodes},
            {"seed", e.seed}};
}

void read_eval(const json& j, const std::string& path, evaluation::EvalSettings& e) {
    Section sec(j, path);
    sec.get("n_way", e.n_way);
    sec.get("k_shot", e.k_shot);
    sec.get("queries_per_class", e.queries_per_class);
    sec.get("episodes", e.episodes);
    sec.get("seed", e.seed);
    sec.finish();
}

void validate_eval(const evaluation::EvalSettings& e, const std::string& name) {
    if (e.n_way < 2) throw ConfigError(name + ".n_way must be >= 2");
    if (e.k_shot < 1 || e.queries_per_class < 1) throw ConfigError(name + ".k_shot and queries_per_class must be >= 1");
    if (e.episodes < 1) throw ConfigError(name + ".episodes must be >= 1");
}

std::size_t source_image_size(const DataSource& s) {
    return s.kind == DataSource::Kind::synthetic ? s.synthetic.image_size : s.image_size;
}

}  // namespace

datasets::Dataset DataSource::load() const {
    if (kind == Kind::synthetic) return datasets::generate_synthetic(synthetic);
    return datasets::load_image_folder(folder, image_size);
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    validate_eval(eval, "eval");
    validate_eval(probe_eval, "probe_eval");
    if (train_data.kind == DataSource::Kind::synthetic) train_data.synthetic.validate();
    if (test_data.kind == DataSource::Kind::synthetic) test_data.synthetic.validate();
    if (probe_data && probe_data->kind == DataSource::Kind::synthetic) probe_data->synthetic.validate();
    const std::size_t size = model.encoder.image_size;
    for (const DataSource* s : {&train_data, &test_data, probe_data ? &*probe_data : nullptr}) {
        if (s != nullptr && source_image_size(*s) != size) {
            throw ConfigError("data image_size " + std::to_string(source_image_size(*s)) +
                              " differs from model.encoder.image_size " + std::to_string(size));
        }
    }
    for (double b : sweep_betas) {
        if (!(b >= 0.0)) throw ConfigError("sweep.betas must be >= 0");
    }
}

RunConfig desk_preset() {
    RunConfig c;
    c.model.encoder = {};
    c.model.views = {};
    c.model.augment.blur_sigma_max = 0.5;
    c.model.contrast.reduction = contrast::Reduction::mean;

    c.train.beta = 0.5;
    c.train.lr = 0.01;
    c.train.epochs = 20;
    c.train.iterations_per_epoch = 200;
    c.train.milestones = {{12, 0.001}, {17, 0.0001}};

    auto& tr = c.train_data.synthetic;
    tr.num_coarse_classes = 24;
    tr.subcats_per_class = 5;
    tr.samples_per_subcat = 12;
    tr.image_size = 16;
    tr.seed = 7;
    c.train_data.image_size = 16;

    c.test_data = c.train_data;
    auto& te = c.test_data.synthetic;
    te.first_class = 24;
    te.num_coarse_classes = 8;
    te.subcats_per_class = 3;
    te.samples_per_subcat = 10;
    te.seed = 99;

    c.probe_data = c.train_data;
    c.probe_data->synthetic.seed = 55;

    c.probe_eval.queries_per_class = 5;
    c.output_dir = "runs/desk";
    return c;
}

RunConfig paper_preset() {
    RunConfig c;
    c.model.encoder.conv_channels = {64, 160, 320, 640};
    c.model.encoder.feature_dim = 640;
    c.model.encoder.proj_hidden = 640;
    c.model.encoder.proj_dim = 128;
    c.model.encoder.image_size = 80;
    c.model.views.conv_channels = {64, 64, 64, 64};
    c.model.views.image_size = 80;
    c.model.contrast.queue_capacity = 63000;
    c.model.contrast.reduction = contrast::Reduction::sum;

    c.train = {};
    c.train.tasks_per_batch = 4;
    c.train.queries_per_class = 15;

    for (DataSource* s : {&c.train_data, &c.test_data}) {
        s->kind = DataSource::Kind::folder;
        s->image_size = 80;
        s->synthetic.image_size = 80;
    }
    c.train_data.folder = "data/miniimagenet/train";
    c.test_data.folder = "data/miniimagenet/test";
    c.probe_data.reset();
    c.eval.queries_per_class = 15;
    c.output_dir = "runs/paper";
    return c;
}

RunConfig preset(const std::string& name) {
    if (name == "desk") return desk_preset();
    if (name == "paper") return paper_preset();
    throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

std::string to_json(const RunConfig& cfg) {
    const auto& m = cfg.model;
    const auto& t = cfg.train;
    json milestones = json::array();
    for (const auto& [epoch, lr] : t.milestones) milestones.push_back({{"epoch", epoch}, {"lr", lr}});
    json j = {
        {"output_dir", cfg.output_dir.string()},
        {"data",
         {{"train", source_json(cfg.train_data)},
          {"test", source_json(cfg.test_data)},
          {"probe", cfg.probe_data ? source_json(*cfg.probe_data) : json(nullptr)}}},
        {"model",
         {{"encoder",
           {{"conv_channels", m.encoder.conv_channels},
            {"feature_dim", m.encoder.feature_dim},
            {"proj_hidden", m.encoder.proj_hidden},
            {"proj_dim", m.encoder.proj_dim},
            {"image_size", m.encoder.image_size},
            {"image_channels", m.encoder.image_channels}}},
          {"views",
           {{"mode", std::string(autoview::view_mode_name(m.view_mode))},
            {"conv_channels", m.views.conv_channels},
            {"image_size", m.views.image_size},
            {"image_channels", m.views.image_channels},
            {"scale_min", m.views.scale_min},
            {"scale_max", m.views.scale_max}}},
          {"augment",
           {{"brightness", m.augment.brightness},
            {"contrast", m.augment.contrast},
            {"saturation", m.augment.saturation},
            {"hue", m.augment.hue},
            {"jitter_prob", m.augment.jitter_prob},
            {"blur_prob", m.augment.blur_prob},
            {"blur_kernel", m.augment.blur_kernel},
            {"blur_sigma_min", m.augment.blur_sigma_min},
            {"blur_sigma_max", m.augment.blur_sigma_max},
            {"flip_prob", m.augment.flip_prob},
            {"independent_per_branch", m.augment.independent_per_branch}}},
          {"contrast",
           {{"temperature", m.contrast.temperature},
            {"queue_capacity", m.contrast.queue_capacity},
            {"include_positive_in_denominator", m.contrast.include_positive_in_denominator},
            {"reduction", std::string(contrast::reduction_name(m.contrast.reduction))}}},
          {"similarity",
           {{"kind", std::string(protohead::similarity_name(m.similarity.kind))}, {"scale", m.similarity.scale}}}}},
        {"train",
         {{"beta", t.beta},
          {"lr", t.lr},
          {"milestones", milestones},
          {"eta", t.eta},
          {"epsilon", t.epsilon},
          {"momentum", t.momentum},
          {"nesterov", t.nesterov},
          {"weight_decay", t.weight_decay},
          {"clip_norm", t.clip_norm},
          {"differentiate_momentum", t.differentiate_momentum},
          {"epochs", t.epochs},
          {"iterations_per_epoch", t.iterations_per_epoch},
          {"tasks_per_batch", t.tasks_per_batch},
          {"n_way", t.n_way},
          {"k_shot", t.k_shot},
          {"queries_per_class", t.queries_per_class},
          {"seed", t.seed}}},
        {"eval", eval_json(cfg.eval)},
        {"probe_eval", eval_json(cfg.probe_eval)},
        {"sweep", {{"betas", cfg.sweep_betas}}},
    };
    return j.dump(2) + "\n";
}

RunConfig from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    Section root(j, "config");
    std::string base = "desk";
    root.get("preset", base);
    RunConfig c = preset(base);
    root.get_path("output_dir", c.output_dir);

    if (const json* d = root.child("data")) {
        Section sec(*d, "data");
        if (const json* s = sec.child("train")) read_source(*s, "data.train", c.train_data);
        if (const json* s = sec.child("test")) read_source(*s, "data.test", c.test_data);
        if (const json* s = sec.child("probe")) {
            if (s->is_null()) {
                c.probe_data.reset();
            } else {
                if (!c.probe_data) c.probe_data = c.train_data;
                read_source(*s, "data.probe", *c.probe_data);
            }
        }
        sec.finish();
    }

    if (const json* mj = root.child("model")) {
        Section model(*mj, "model");
        auto& m = c.model;
        if (const json* e = model.child("encoder")) {
            Section sec(*e, "model.encoder");
            sec.get_list("conv_channels", m.encoder.conv_channels);
            sec.get("feature_dim", m.encoder.feature_dim);
            sec.get("proj_hidden", m.encoder.proj_hidden);
            sec.get("proj_dim", m.encoder.proj_dim);
            sec.get("image_size", m.encoder.image_size);
            sec.get("image_channels", m.encoder.image_channels);
            sec.finish();
        }
        if (const json* v = model.child("views")) {
            Section sec(*v, "model.views");
            std::string mode(autoview::view_mode_name(m.view_mode));
            sec.get("mode", mode);
            m.view_mode = autoview::parse_view_mode(mode);
            sec.get_list("conv_channels", m.views.conv_channels);
            sec.get("image_size", m.views.image_size);
            sec.get("image_channels", m.views.image_channels);
            sec.get("scale_min", m.views.scale_min);
            sec.get("scale_max", m.views.scale_max);
            sec.finish();
        }
        if (const json* a = model.child("augment")) {
            Section sec(*a, "model.augment");
            sec.get("brightness", m.augment.brightness);
            sec.get("contrast", m.augment.contrast);
            sec.get("saturation", m.augment.saturation);
            sec.get("hue", m.augment.hue);
            sec.get("jitter_prob", m.augment.jitter_prob);
            sec.get("blur_prob", m.augment.blur_prob);
            sec.get("blur_kernel", m.augment.blur_kernel);
            sec.get("blur_sigma_min", m.augment.blur_sigma_min);
            sec.get("blur_sigma_max", m.augment.blur_sigma_max);
            sec.get("flip_prob", m.augment.flip_prob);
            sec.get("independent_per_branch", m.augment.independent_per_branch);
            sec.finish();
        }
        if (const json* k = model.child("contrast")) {
            Section sec(*k, "model.contrast");
            sec.get("temperature", m.contrast.temperature);
            sec.get("queue_capacity", m.contrast.queue_capacity);
            sec.get("include_positive_in_denominator", m.contrast.include_positive_in_denominator);
            std::string reduction(contrast::reduction_name(m.contrast.reduction));
            sec.get("reduction", reduction);
            m.contrast.reduction = contrast::parse_reduction(reduction);
            sec.finish();
        }
        if (const json* s = model.child("similarity")) {
            Section sec(*s, "model.similarity");
            std::string kind(protohead::similarity_name(m.similarity.kind));
            sec.get("kind", kind);
            m.similarity.kind = protohead::parse_similarity(kind);
            sec.get("scale", m.similarity.scale);
            sec.finish();
        }
        model.finish();
    }

    if (const json* tj = root.child("train")) {
        Section sec(*tj, "train");
        auto& t = c.train;
        sec.get("beta", t.beta);
        sec.get("lr", t.lr);
        if (const json* ms = sec.child("milestones")) {
            if (!ms->is_array()) throw ConfigError("train.milestones must be an array");
            t.milestones.clear();
            for (const auto& entry : *ms) {
                Section m(entry, "train.milestones[]");
                std::size_t epoch = 0;
                double lr = 0.0;
                m.get("epoch", epoch);
                m.get("lr", lr);
                m.finish();
                t.milestones[epoch] = lr;
            }
        }
        sec.get("eta", t.eta);
        sec.get("epsilon", t.epsilon);
        sec.get("momentum", t.momentum);
        sec.get("nesterov", t.nesterov);
        sec.get("weight_decay", t.weight_decay);
        sec.get("clip_norm", t.clip_norm);
        sec.get("differentiate_momentum", t.differentiate_momentum);
        sec.get("epochs", t.epochs);
        sec.get("iterations_per_epoch", t.iterations_per_epoch);
        sec.get("tasks_per_batch", t.tasks_per_batch);
        sec.get("n_way", t.n_way);
        sec.get("k_shot", t.k_shot);
        sec.get("queries_per_class", t.queries_per_class);
        sec.get("seed", t.seed);
        sec.finish();
    }
    if (const json* e = root.child("eval")) read_eval(*e, "eval", c.eval);
    if (const json* e = root.child("probe_eval")) read_eval(*e, "probe_eval", c.probe_eval);
    if (const json* s = root.child("sweep")) {
        Section sec(*s, "sweep");
        sec.get_list("betas", c.sweep_betas);
        sec.finish();
    }
    root.finish();
    c.validate();
    return c;
}

RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void save(const RunConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_json(cfg);
}

}  // namespace vlcl::config
