#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ccm/errors.hpp"

namespace ccm {

/// Versioned binary bundle of named double tensors. Raw little-endian
/// payloads: loading restores evaluation behavior bit for bit.
class Checkpoint {
public:
    static constexpr std::uint32_t kMagic = 0x43434d43;  // "CMCC"
    static constexpr std::uint32_t kVersion = 1;

    std::map<std::string, std::vector<double>>& tensors() { return tensors_; }
    const std::map<std::string, std::vector<double>>& tensors() const {
        return tensors_;
    }

    void put(const std::string& name, std::vector<double> values) {
        tensors_[name] = std::move(values);
    }
    void put_scalar(const std::string& name, double v) { put(name, {v}); }

    bool has(const std::string& name) const { return tensors_.count(name) != 0; }

    const std::vector<double>& get(const std::string& name) const {
        auto it = tensors_.find(name);
        if (it == tensors_.end())
            throw IncompatibleCheckpointError("checkpoint is missing tensor: " + name);
        return it->second;
    }
    double get_scalar(const std::string& name) const {
        const auto& v = get(name);
        if (v.size() != 1)
            throw IncompatibleCheckpointError("tensor is not a scalar: " + name);
        return v[0];
    }

    /// Copy into an existing buffer, insisting on an exact size match.
    void restore(const std::string& name, std::vector<double>& dst) const {
        const auto& src = get(name);
        if (src.size() != dst.size())
            throw IncompatibleCheckpointError(
                "tensor size mismatch for " + name + ": checkpoint has " +
                std::to_string(src.size()) + ", expected " +
                std::to_string(dst.size()));
        dst = src;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ConfigError("cannot write checkpoint: " + path);
        write_u32(out, kMagic);
        write_u32(out, kVersion);
        write_u32(out, static_cast<std::uint32_t>(tensors_.size()));
        for (const auto& [name, values] : tensors_) {
            write_u32(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_u64(out, values.size());
            out.write(reinterpret_cast<const char*>(values.data()),
                      static_cast<std::streamsize>(values.size() * sizeof(double)));
        }
        if (!out) throw ConfigError("short write saving checkpoint: " + path);
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("cannot open checkpoint: " + path);
        Checkpoint ck;
        if (read_u32(in) != kMagic)
            throw IncompatibleCheckpointError("not a checkpoint file: " + path);
        if (read_u32(in) != kVersion)
            throw IncompatibleCheckpointError("unsupported checkpoint version");
        const std::uint32_t count = read_u32(in);
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::uint32_t name_len = read_u32(in);
            std::string name(name_len, '\0');
            in.read(name.data(), name_len);
            const std::uint64_t n = read_u64(in);
            std::vector<double> values(n);
            in.read(reinterpret_cast<char*>(values.data()),
                    static_cast<std::streamsize>(n * sizeof(double)));
            if (!in) throw IncompatibleCheckpointError("truncated checkpoint: " + path);
            ck.tensors_[name] = std::move(values);
        }
        return ck;
    }

private:
    static void write_u32(std::ofstream& out, std::uint32_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static void write_u64(std::ofstream& out, std::uint64_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static std::uint32_t read_u32(std::ifstream& in) {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    }
    static std::uint64_t read_u64(std::ifstream& in) {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    }

    std::map<std::string, std::vector<double>> tensors_;
};

}  // namespace ccm
