#include "hyperskel/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace hyperskel {

using nlohmann::json;

namespace {

SkeletonSequence parse_line(const json& j, const std::string& where) {
    SkeletonSequence s;
    if (!j.is_object()) throw std::runtime_error(where + ": not a JSON object");
    for (const char* key : {"label", "subject", "view", "joints"})
        if (!j.contains(key))
            throw std::runtime_error(where + ": missing key '" + key + "'");
    s.label = j.at("label").get<int>();
    s.subject = j.at("subject").get<std::string>();
    s.view = j.at("view").get<std::string>();
    const json& joints = j.at("joints");
    if (!joints.is_array() || joints.empty())
        throw std::runtime_error(where + ": joints must be a non-empty array");
    s.m = static_cast<int>(joints.size());
    const json& person0 = joints.at(0);
    if (!person0.is_array() || person0.empty())
        throw std::runtime_error(where + ": person entry must be a non-empty array");
    s.v = static_cast<int>(person0.size());
    const json& joint0 = person0.at(0);
    if (!joint0.is_array() || joint0.empty())
        throw std::runtime_error(where + ": joint entry must be a non-empty array");
    s.t = static_cast<int>(joint0.size());
    s.c = 3;
    s.joints.resize(static_cast<std::size_t>(s.m) * s.v * s.t * s.c);
    for (int mi = 0; mi < s.m; ++mi) {
        const json& person = joints.at(mi);
        if (!person.is_array() || static_cast<int>(person.size()) != s.v)
            throw std::runtime_error(where + ": ragged joint count");
        for (int vi = 0; vi < s.v; ++vi) {
            const json& track = person.at(vi);
            if (!track.is_array() || static_cast<int>(track.size()) != s.t)
                throw std::runtime_error(where + ": ragged frame count");
            for (int ti = 0; ti < s.t; ++ti) {
                const json& p = track.at(ti);
                if (!p.is_array() || p.size() != 3)
                    throw std::runtime_error(where + ": coordinate triple expected");
                for (int ci = 0; ci < 3; ++ci) {
                    if (!p.at(ci).is_number())
                        throw std::runtime_error(where + ": non-numeric coordinate");
                    s.at(mi, vi, ti, ci) = p.at(ci).get<double>();
                }
            }
        }
    }
    return s;
}

}  // namespace

std::vector<SkeletonSequence> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_jsonl: cannot open " + path);
    std::vector<SkeletonSequence> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::string where = path + ":" + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
        out.push_back(parse_line(j, where));
    }
    return out;
}

void save_jsonl(const std::string& path, const std::vector<SkeletonSequence>& seqs) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_jsonl: cannot open " + path);
    for (const auto& s : seqs) {
        json joints = json::array();
        for (int mi = 0; mi < s.m; ++mi) {
            json person = json::array();
            for (int vi = 0; vi < s.v; ++vi) {
                json track = json::array();
                for (int ti = 0; ti < s.t; ++ti)
                    track.push_back({s.at(mi, vi, ti, 0), s.at(mi, vi, ti, 1),
                                     s.at(mi, vi, ti, 2)});
                person.push_back(std::move(track));
            }
            joints.push_back(std::move(person));
        }
        json j = {{"label", s.label}, {"subject", s.subject}, {"view", s.view},
                  {"joints", std::move(joints)}};
        out << j.dump() << "\n";
    }
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_manifest: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("load_manifest: " + path + ": " + e.what());
    }
    Manifest m;
    m.train = j.at("train").get<std::string>();
    m.val = j.value("val", std::string());
    m.layout = j.at("layout").get<std::string>();
    m.num_classes = j.at("num_classes").get<int>();
    if (m.num_classes <= 0) throw std::runtime_error("load_manifest: num_classes must be positive");
    return m;
}

void save_manifest(const std::string& path, const Manifest& m) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_manifest: cannot open " + path);
    json j = {{"train", m.train}, {"val", m.val}, {"layout", m.layout},
              {"num_classes", m.num_classes}};
    out << j.dump(2) << "\n";
}

std::vector<SkeletonSequence> synth_generate(int n_classes, int per_class, int v,
                                             int t_raw, std::uint64_t seed,
                                             double noise_sigma) {
    if (n_classes <= 0 || per_class <= 0 || v <= 0 || t_raw <= 0)
        throw std::invalid_argument("synth_generate: all sizes must be positive");
    if (noise_sigma < 0.0) throw std::invalid_argument("synth_generate: negative noise");
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> phase(0.0, 0.5);
    std::normal_distribution<double> noise(0.0, 1.0);

    // fixed base pose shared by every class
    std::vector<double> base(static_cast<std::size_t>(v) * 3);
    for (int j = 0; j < v; ++j) {
        base[static_cast<std::size_t>(j) * 3 + 0] = 0.15 * j;
        base[static_cast<std::size_t>(j) * 3 + 1] = 0.1 * std::sin(2.3 * j);
        base[static_cast<std::size_t>(j) * 3 + 2] = 0.1 * std::cos(1.7 * j);
    }

    std::vector<SkeletonSequence> out;
    out.reserve(static_cast<std::size_t>(n_classes) * per_class);
    for (int cls = 0; cls < n_classes; ++cls) {
        // a contiguous joint subtree carries the class motion
        int lo = cls * v / n_classes;
        int hi = (cls + 1) * v / n_classes;
        if (hi <= lo) hi = lo + 1;
        int static_axis = cls % 3;
        int move_axis = (cls + 1) % 3;
        double amp = 0.25 + 0.05 * cls;
        double freq = 1.0 + cls;
        for (int k = 0; k < per_class; ++k) {
            SkeletonSequence s;
            s.label = cls;
            s.subject = "synth" + std::to_string(k);
            s.view = "v0";
            s.m = 1;
            s.v = v;
            s.t = t_raw;
            s.joints.assign(static_cast<std::size_t>(v) * t_raw * 3, 0.0);
            double phi = phase(gen);
            for (int j = 0; j < v; ++j)
                for (int ti = 0; ti < t_raw; ++ti)
                    for (int ci = 0; ci < 3; ++ci) {
                        double val = base[static_cast<std::size_t>(j) * 3 + ci];
                        if (j >= lo && j < hi) {
                            if (ci == static_axis) val += 0.4;
                            if (ci == move_axis)
                                val += amp * std::sin(2.0 * M_PI * freq * ti /
                                                          std::max(1, t_raw) + phi);
                        }
                        s.at(0, j, ti, ci) = val + noise_sigma * noise(gen);
                    }
            out.push_back(std::move(s));
        }
    }
    return out;
}

SkeletonSequence resize_temporal(const SkeletonSequence& s, int t_target) {
    if (t_target <= 0) throw std::invalid_argument("resize_temporal: bad target length");
    SkeletonSequence out;
    out.label = s.label;
    out.subject = s.subject;
    out.view = s.view;
    out.m = s.m;
    out.v = s.v;
    out.t = t_target;
    out.c = s.c;
    out.joints.assign(static_cast<std::size_t>(s.m) * s.v * t_target * s.c, 0.0);
    for (int mi = 0; mi < s.m; ++mi)
        for (int vi = 0; vi < s.v; ++vi)
            for (int ti = 0; ti < t_target; ++ti) {
                double src = (t_target == 1 || s.t == 1)
                                 ? 0.0
                                 : static_cast<double>(ti) * (s.t - 1) / (t_target - 1);
                int i0 = static_cast<int>(src);
                int i1 = std::min(i0 + 1, s.t - 1);
                double w = src - i0;
                for (int ci = 0; ci < s.c; ++ci)
                    out.at(mi, vi, ti, ci) =
                        (1.0 - w) * s.at(mi, vi, i0, ci) + w * s.at(mi, vi, i1, ci);
            }
    return out;
}

SkeletonSequence center_on_root(const SkeletonSequence& s, int root_joint) {
    if (root_joint < 0 || root_joint >= s.v)
        throw std::invalid_argument("center_on_root: root joint out of range");
    SkeletonSequence out = s;
    for (int mi = 0; mi < s.m; ++mi) {
        double ox = s.at(mi, root_joint, 0, 0);
        double oy = s.at(mi, root_joint, 0, 1);
        double oz = s.at(mi, root_joint, 0, 2);
        for (int vi = 0; vi < s.v; ++vi)
            for (int ti = 0; ti < s.t; ++ti) {
                out.at(mi, vi, ti, 0) -= ox;
                out.at(mi, vi, ti, 1) -= oy;
                out.at(mi, vi, ti, 2) -= oz;
            }
    }
    return out;
}

namespace {

Tensor adjacency_from_bones(int v, const std::vector<std::pair<int, int>>& bones) {
    std::vector<double> a(static_cast<std::size_t>(v) * v, 0.0);
    for (int i = 0; i < v; ++i) a[static_cast<std::size_t>(i) * v + i] = 1.0;
    for (auto [i, j] : bones) {
        a[static_cast<std::size_t>(i) * v + j] = 1.0;
        a[static_cast<std::size_t>(j) * v + i] = 1.0;
    }
    return Tensor::from_data({v, v}, std::move(a));
}

// kinect v1 20-joint hierarchy, 0-indexed
const std::vector<std::pair<int, int>> kNwUcla20Bones = {
    {1, 0},  {2, 1},  {3, 2},  {4, 2},  {5, 4},  {6, 5},  {7, 6},
    {8, 2},  {9, 8},  {10, 9}, {11, 10}, {12, 0}, {13, 12}, {14, 13},
    {15, 14}, {16, 0}, {17, 16}, {18, 17}, {19, 18}};

// kinect v2 25-joint skeleton, 0-indexed
const std::vector<std::pair<int, int>> kNtu25Bones = {
    {0, 1},   {1, 20},  {2, 20},  {3, 2},   {4, 20},  {5, 4},   {6, 5},
    {7, 6},   {8, 20},  {9, 8},   {10, 9},  {11, 10}, {12, 0},  {13, 12},
    {14, 13}, {15, 14}, {16, 0},  {17, 16}, {18, 17}, {19, 18}, {21, 22},
    {22, 7},  {23, 24}, {24, 11}};

}  // namespace

int layout_joint_count(const std::string& layout) {
    if (layout == "nwucla20") return 20;
    if (layout == "ntu25") return 25;
    if (layout.rfind("chain", 0) == 0) {
        int v = 0;
        try {
            v = std::stoi(layout.substr(5));
        } catch (...) {
            throw std::invalid_argument("skeleton_adjacency: unknown layout " + layout);
        }
        if (v <= 0) throw std::invalid_argument("skeleton_adjacency: bad chain size");
        return v;
    }
    throw std::invalid_argument("skeleton_adjacency: unknown layout " + layout);
}

Tensor skeleton_adjacency(const std::string& layout) {
    if (layout == "nwucla20") return adjacency_from_bones(20, kNwUcla20Bones);
    if (layout == "ntu25") return adjacency_from_bones(25, kNtu25Bones);
    int v = layout_joint_count(layout);
    std::vector<std::pair<int, int>> bones;
    for (int i = 0; i + 1 < v; ++i) bones.push_back({i, i + 1});
    return adjacency_from_bones(v, bones);
}

Tensor bone_offsets(const Tensor& x_frame) {
    if (x_frame.shape().size() != 2)
        throw std::invalid_argument("bone_offsets: expected (v, c) frame");
    int v = x_frame.dim(0), c = x_frame.dim(1);
    std::vector<Tensor> blocks;
    blocks.reserve(static_cast<std::size_t>(v));
    for (int i = 0; i < v; ++i) {
        std::vector<int> idx(static_cast<std::size_t>(v), i);
        blocks.push_back(sub(gather_rows(x_frame, idx), x_frame));
    }
    return reshape(concat_rows(blocks), {v, v, c});
}

std::vector<SkeletonBatch> make_batches(const std::vector<SkeletonSequence>& seqs,
                                        int batch_size, int t_target,
                                        std::uint64_t shuffle_seed, bool shuffle) {
    if (seqs.empty()) throw std::invalid_argument("make_batches: no sequences");
    if (batch_size <= 0) throw std::invalid_argument("make_batches: bad batch size");

    std::vector<std::size_t> order(seqs.size());
    std::iota(order.begin(), order.end(), 0);
    if (shuffle) {
        std::mt19937_64 gen(shuffle_seed);
        std::shuffle(order.begin(), order.end(), gen);
    }

    int m = seqs[0].m, v = seqs[0].v, c = seqs[0].c;
    std::vector<SkeletonBatch> out;
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(batch_size)) {
        std::size_t n = std::min<std::size_t>(batch_size, order.size() - pos);
        SkeletonBatch b;
        b.n = static_cast<int>(n);
        b.m = m;
        b.v = v;
        b.t = t_target;
        b.c = c;
        b.x.resize(n * static_cast<std::size_t>(m) * v * t_target * c);
        b.labels.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const SkeletonSequence& raw = seqs[order[pos + k]];
            if (raw.m != m || raw.v != v || raw.c != c)
                throw std::invalid_argument("make_batches: inconsistent sequence shapes");
            SkeletonSequence s = center_on_root(resize_temporal(raw, t_target));
            b.labels[k] = s.label;
            std::copy(s.joints.begin(), s.joints.end(),
                      b.x.begin() + static_cast<std::size_t>(k) * s.joints.size());
        }
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace hyperskel
