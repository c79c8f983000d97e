#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "filmseg/nn/graph.hpp"

namespace filmseg::nn {

// Binary tensor container: magic, tensor count, then per tensor
// int64 rows, int64 cols, float32 data in column-major order.
inline constexpr char kWeightsMagic[8] = {'F', 'S', 'G', 'W', '0', '0', '0', '1'};

template <typename T>
void save_weights(const std::vector<Var<T>>& params, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(kWeightsMagic, sizeof(kWeightsMagic));
    int64_t count = static_cast<int64_t>(params.size());
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& p : params) {
        int64_t rows = p->value.rows(), cols = p->value.cols();
        out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
        out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
        std::vector<float> buf(static_cast<size_t>(rows) * cols);
        for (Eigen::Index c = 0, i = 0; c < cols; ++c)
            for (Eigen::Index r = 0; r < rows; ++r) buf[i++] = static_cast<float>(p->value(r, c));
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

// Loads into existing parameter nodes; shapes must match exactly.
template <typename T>
void load_weights(const std::vector<Var<T>>& params, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kWeightsMagic, sizeof(magic)) != 0)
        throw std::runtime_error("bad weights file " + path.string());
    int64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (count != static_cast<int64_t>(params.size()))
        throw std::runtime_error("weights file tensor count mismatch in " + path.string());
    for (const auto& p : params) {
        int64_t rows = 0, cols = 0;
        in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
        in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
        if (rows != p->value.rows() || cols != p->value.cols())
            throw std::runtime_error("weights tensor shape mismatch in " + path.string());
        std::vector<float> buf(static_cast<size_t>(rows) * cols);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!in) throw std::runtime_error("truncated weights file " + path.string());
        for (Eigen::Index c = 0, i = 0; c < cols; ++c)
            for (Eigen::Index r = 0; r < rows; ++r) p->value(r, c) = static_cast<T>(buf[i++]);
    }
}

}  // namespace filmseg::nn
