#pragma once

#include "embedsom/core.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace embedsom {

enum class DataFormat { Fcs, Tsv, Csv, Obj };

const char *to_string(DataFormat f) noexcept;
DataFormat parse_format(std::string_view name);
/// Guess from the file extension; throws `unknown_format`.
DataFormat format_from_extension(const std::filesystem::path &path);

/// List-mode FCS 3.0/3.1 with $DATATYPE F, 32-bit parameters and
/// little- or big-endian byte order. Other layouts are rejected with a
/// diagnostic naming the keyword or offset.
Dataset parse_fcs(std::span<const std::byte> bytes);
Dataset parse_fcs(std::string_view bytes);

/// Rectangular numeric table. Blank lines are skipped; "\r\n" accepted.
Dataset parse_delimited(std::string_view text, char delimiter, bool has_header);
/// Header present iff the first non-blank line has a non-numeric cell.
Dataset parse_delimited_auto(std::string_view text, char delimiter);
/// Shortest round-trip decimal form, so parse(write(x)) == x bit-exactly.
std::string write_delimited(const Dataset &data, char delimiter, bool header = true);

/// Every "v x y z ..." line becomes one 3D point, in file order.
Dataset parse_obj_vertices(std::string_view text);

enum class TransformKind { None, MinMax, ZScore, Affine };

struct Transform {
    TransformKind kind = TransformKind::None;
    double a = 1.0;  // affine: a * x + b
    double b = 0.0;
};

/// One entry per dimension.
using TransformSpec = std::vector<Transform>;

TransformKind parse_transform_kind(std::string_view name);
const char *to_string(TransformKind kind) noexcept;
TransformSpec uniform_transform(TransformKind kind, std::size_t d);

/// Constant columns map to 0.5 under min-max and 0 under z-score.
Dataset apply_transform(const Dataset &data, const TransformSpec &spec);

std::string read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, std::string_view contents);

/// Reads and parses `path`. Without an explicit transform, FCS data is
/// z-scored and everything else left as is.
Dataset load_dataset(const std::filesystem::path &path, std::optional<DataFormat> format = std::nullopt,
                     std::optional<TransformKind> transform = std::nullopt);

}  // namespace embedsom
