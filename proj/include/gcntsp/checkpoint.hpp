#pragma once

/// @file checkpoint.hpp
/// @brief Model checkpoint container.
///
/// Layout: an ASCII header terminated by the line "end", then the raw payload.
///
///     gcntsp-checkpoint 1
///     config l_conv=8 l_mlp=3 h=64 k=20 epsilon_gate=1.0000000000000001e-20
///     adam step=1500 beta1=0.9 beta2=0.999 eps=1e-08
///     meta <key>=<value>                      (zero or more, free-form)
///     tensor <kind> <name> f32 <rank> <d0> ... <d{rank-1}>
///     ...
///     end
///
/// `kind` is one of param, bn_mean, bn_var, adam_m, adam_v. The payload holds
/// every listed tensor's values as little-endian IEEE-754 binary32, row-major,
/// concatenated in header order, with nothing after the last tensor. Writers
/// list all params, then bn_mean/bn_var per batch-norm site, then adam_m/adam_v
/// per param; readers match by (kind, name) and require every model tensor.

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "autodiff.hpp"
#include "errors.hpp"
#include "model.hpp"

namespace gcntsp {

struct Checkpoint {
    GcnModel<float> model;
    std::map<std::string, std::string> meta;
};

namespace detail {

inline void write_f32_le(std::ostream& out, std::span<const float> values) {
    std::vector<unsigned char> buf(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(values[i]);
        buf[4 * i] = static_cast<unsigned char>(bits);
        buf[4 * i + 1] = static_cast<unsigned char>(bits >> 8);
        buf[4 * i + 2] = static_cast<unsigned char>(bits >> 16);
        buf[4 * i + 3] = static_cast<unsigned char>(bits >> 24);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::map<std::string, std::string> parse_pairs(std::istringstream& line, std::size_t line_no) {
    std::map<std::string, std::string> kv;
    std::string tok;
    while (line >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos || eq == 0) throw ParseError(line_no, "expected key=value, got '" + tok + "'");
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return kv;
}

inline const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key,
                               std::size_t line_no) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(line_no, "missing '" + key + "'");
    return it->second;
}

inline std::uint64_t to_u64(const std::string& s, std::size_t line_no) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ParseError(line_no, "bad integer '" + s + "'");
    return v;
}

inline double to_f64(const std::string& s, std::size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw ParseError(line_no, "bad number '" + s + "'");
    return v;
}

} // namespace detail

inline void save_checkpoint(std::ostream& out, const GcnModel<float>& model,
                            const std::map<std::string, std::string>& meta = {}) {
    const auto& cfg = model.config();
    const auto& store = model.params();
    const ad::AdamOptions adam;
    std::ostringstream head;
    head << "gcntsp-checkpoint 1\n";
    head << "config l_conv=" << cfg.l_conv << " l_mlp=" << cfg.l_mlp << " h=" << cfg.h << " k=" << cfg.k
         << " epsilon_gate=" << detail::format_double(cfg.epsilon_gate) << "\n";
    head << "adam step=" << store.step() << " beta1=" << detail::format_double(adam.beta1)
         << " beta2=" << detail::format_double(adam.beta2) << " eps=" << detail::format_double(adam.eps) << "\n";
    for (const auto& [k, v] : meta) {
        if (k.find_first_of(" \n=") != std::string::npos || v.find_first_of(" \n") != std::string::npos)
            throw InvalidArgument("checkpoint meta entries must not contain spaces: '" + k + "'");
        head << "meta " << k << "=" << v << "\n";
    }
    auto tensor_line = [&](const char* kind, const std::string& name, const ad::Shape& shape) {
        head << "tensor " << kind << " " << name << " f32 " << shape.size();
        for (auto d : shape) head << " " << d;
        head << "\n";
    };
    for (const auto& p : store.params()) tensor_line("param", p.name, p.tensor.shape());
    for (const auto& b : store.batch_norms()) {
        tensor_line("bn_mean", b.name, {b.stats.running_mean.size()});
        tensor_line("bn_var", b.name, {b.stats.running_var.size()});
    }
    for (const auto& p : store.params()) {
        tensor_line("adam_m", p.name, p.tensor.shape());
        tensor_line("adam_v", p.name, p.tensor.shape());
    }
    head << "end\n";
    const std::string h = head.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));

    for (const auto& p : store.params()) detail::write_f32_le(out, p.tensor.values());
    for (const auto& b : store.batch_norms()) {
        detail::write_f32_le(out, b.stats.running_mean);
        detail::write_f32_le(out, b.stats.running_var);
    }
    for (const auto& p : store.params()) {
        detail::write_f32_le(out, p.adam_m);
        detail::write_f32_le(out, p.adam_v);
    }
}

inline void save_checkpoint(const std::string& path, const GcnModel<float>& model,
                            const std::map<std::string, std::string>& meta = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    save_checkpoint(out, model, meta);
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> std::istringstream {
        if (!std::getline(in, line)) throw ParseError(line_no + 1, "unexpected end of checkpoint header");
        ++line_no;
        return std::istringstream(line);
    };

    {
        auto ls = next_line();
        std::string magic, version;
        ls >> magic >> version;
        if (magic != "gcntsp-checkpoint") throw ParseError(line_no, "not a gcntsp checkpoint");
        if (version != "1") throw ParseError(line_no, "unsupported checkpoint version '" + version + "'");
    }

    GcnConfig cfg;
    std::uint64_t step = 0;
    std::map<std::string, std::string> meta;
    struct Entry {
        std::string kind, name;
        ad::Shape shape;
    };
    std::vector<Entry> entries;
    bool have_config = false;
    for (;;) {
        auto ls = next_line();
        std::string tag;
        ls >> tag;
        if (tag == "end") break;
        if (tag == "config") {
            const auto kv = detail::parse_pairs(ls, line_no);
            cfg.l_conv = detail::to_u64(detail::need(kv, "l_conv", line_no), line_no);
            cfg.l_mlp = detail::to_u64(detail::need(kv, "l_mlp", line_no), line_no);
            cfg.h = detail::to_u64(detail::need(kv, "h", line_no), line_no);
            cfg.k = detail::to_u64(detail::need(kv, "k", line_no), line_no);
            cfg.epsilon_gate = detail::to_f64(detail::need(kv, "epsilon_gate", line_no), line_no);
            have_config = true;
        } else if (tag == "adam") {
            const auto kv = detail::parse_pairs(ls, line_no);
            step = detail::to_u64(detail::need(kv, "step", line_no), line_no);
        } else if (tag == "meta") {
            for (auto& [k, v] : detail::parse_pairs(ls, line_no)) meta[k] = v;
        } else if (tag == "tensor") {
            Entry e;
            std::string dtype;
            std::size_t rank = 0;
            if (!(ls >> e.kind >> e.name >> dtype >> rank)) throw ParseError(line_no, "malformed tensor line");
            if (dtype != "f32") throw ParseError(line_no, "unsupported dtype '" + dtype + "'");
            e.shape.resize(rank);
            for (auto& d : e.shape)
                if (!(ls >> d)) throw ParseError(line_no, "malformed tensor shape");
            entries.push_back(std::move(e));
        } else {
            throw ParseError(line_no, "unknown header line '" + tag + "'");
        }
    }
    if (!have_config) throw ParseError(0, "checkpoint has no config line");

    try {
        cfg.validate();
    } catch (const InvalidArgument& e) {
        throw ParseError(0, std::string("invalid config: ") + e.what());
    }
    GcnModel<float> model(cfg, 0);
    auto& store = model.params();
    std::map<std::pair<std::string, std::string>, std::span<float>> slots;
    std::map<std::pair<std::string, std::string>, ad::Shape> shapes;
    for (auto& p : store.params()) {
        slots[{"param", p.name}] = p.tensor.values();
        slots[{"adam_m", p.name}] = p.adam_m;
        slots[{"adam_v", p.name}] = p.adam_v;
        shapes[{"param", p.name}] = shapes[{"adam_m", p.name}] = shapes[{"adam_v", p.name}] = p.tensor.shape();
    }
    for (auto& b : store.batch_norms()) {
        slots[{"bn_mean", b.name}] = b.stats.running_mean;
        slots[{"bn_var", b.name}] = b.stats.running_var;
        shapes[{"bn_mean", b.name}] = shapes[{"bn_var", b.name}] = {b.stats.running_mean.size()};
    }

    for (const auto& e : entries) {
        const auto key = std::make_pair(e.kind, e.name);
        auto it = slots.find(key);
        if (it == slots.end()) throw ParseError(0, "checkpoint tensor " + e.kind + " '" + e.name + "' unknown to model");
        if (shapes[key] != e.shape)
            throw ParseError(0, "tensor " + e.kind + " '" + e.name + "' has shape " + ad::shape_string(e.shape) +
                                    ", model expects " + ad::shape_string(shapes[key]));
        std::vector<unsigned char> buf(it->second.size() * 4);
        if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
            throw ParseError(0, "checkpoint payload truncated at " + e.kind + " '" + e.name + "'");
        for (std::size_t i = 0; i < it->second.size(); ++i) {
            const std::uint32_t bits = static_cast<std::uint32_t>(buf[4 * i]) |
                                       static_cast<std::uint32_t>(buf[4 * i + 1]) << 8 |
                                       static_cast<std::uint32_t>(buf[4 * i + 2]) << 16 |
                                       static_cast<std::uint32_t>(buf[4 * i + 3]) << 24;
            it->second[i] = std::bit_cast<float>(bits);
        }
        slots.erase(it);
    }
    if (!slots.empty())
        throw ParseError(0, "checkpoint is missing " + slots.begin()->first.first + " '" +
                                slots.begin()->first.second + "'");
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError(0, "trailing bytes after checkpoint payload");
    store.set_step(step);
    return Checkpoint{std::move(model), std::move(meta)};
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    return load_checkpoint(in);
}

} // namespace gcntsp
