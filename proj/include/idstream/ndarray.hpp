// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace idstream {

/// Row-major float array with explicit dimensions; the interchange type for
/// frames and flow fields.
struct NdArray {
    std::vector<std::size_t> dims;
    std::vector<double> data;

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return dims.size(); }

    double at2(std::size_t i, std::size_t j) const { return data[i * dims[1] + j]; }
    double at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * dims[1] + j) * dims[2] + k];
    }

    static std::size_t expected_size(const std::vector<std::size_t>& dims) {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                               std::multiplies<std::size_t>());
    }
};

/// Parses either an inline (nested-array) JSON value or a {"file": name}
/// reference to a float32 sidecar, resolved relative to base_dir.
NdArray load_ndarray(const nlohmann::json& value, const std::filesystem::path& base_dir);

/// Sidecar format: magic "NDF1", u32 rank, u32 dims[rank], float32 data,
/// all little-endian, row-major.
NdArray read_ndarray_file(const std::filesystem::path& path);
void write_ndarray_file(const NdArray& array, const std::filesystem::path& path);

}  // namespace idstream
