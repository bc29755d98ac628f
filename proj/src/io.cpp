#include "embedsom/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace embedsom {

const char *to_string(DataFormat f) noexcept {
    switch (f) {
    case DataFormat::Fcs: return "fcs";
    case DataFormat::Tsv: return "tsv";
    case DataFormat::Csv: return "csv";
    case DataFormat::Obj: return "obj";
    }
    return "?";
}

DataFormat parse_format(std::string_view name) {
    if (name == "fcs") return DataFormat::Fcs;
    if (name == "tsv") return DataFormat::Tsv;
    if (name == "csv") return DataFormat::Csv;
    if (name == "obj") return DataFormat::Obj;
    throw Error(ErrorKind::Parameter, "unknown_format", "unknown data format '" + std::string(name) + "'");
}

DataFormat format_from_extension(const std::filesystem::path &path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".fcs") return DataFormat::Fcs;
    if (ext == ".tsv" || ext == ".txt") return DataFormat::Tsv;
    if (ext == ".csv") return DataFormat::Csv;
    if (ext == ".obj") return DataFormat::Obj;
    throw Error(ErrorKind::Parameter, "unknown_format", "cannot infer data format of '" + path.string() + "'");
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

std::string upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
    return out;
}

template <typename T>
bool parse_number(std::string_view s, T &out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+')
        s.remove_prefix(1);
    if (s.empty())
        return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

Error fcs_error(std::string code, const std::string &detail) {
    return Error(ErrorKind::Input, std::move(code), "FCS: " + detail);
}

// ---- FCS -----------------------------------------------------------------

std::size_t header_offset(std::string_view bytes, std::size_t at, const char *field) {
    const std::string_view raw = trim(bytes.substr(at, 8));
    if (raw.empty())
        return 0;
    std::size_t v = 0;
    if (!parse_number(raw, v))
        throw fcs_error("bad_header", std::string("unparsable ") + field + " offset at byte " + std::to_string(at));
    return v;
}

std::map<std::string, std::string> parse_text_segment(std::string_view text) {
    if (text.empty())
        throw fcs_error("bad_text", "empty TEXT segment");
    const char delim = text[0];
    std::vector<std::string> tokens;
    std::string cur;
    for (std::size_t i = 1; i < text.size(); ++i) {
        const char c = text[i];
        if (c != delim) {
            cur += c;
            continue;
        }
        if (i + 1 < text.size() && text[i + 1] == delim) {
            cur += delim;  // escaped delimiter inside a value
            ++i;
            continue;
        }
        tokens.push_back(std::move(cur));
        cur.clear();
    }
    if (!cur.empty())
        tokens.push_back(std::move(cur));
    if (tokens.size() % 2 != 0)
        throw fcs_error("bad_text", "TEXT segment has an unpaired keyword '" + tokens.back() + "'");
    std::map<std::string, std::string> kv;
    for (std::size_t i = 0; i < tokens.size(); i += 2)
        kv[upper(trim(tokens[i]))] = std::string(trim(tokens[i + 1]));
    return kv;
}

const std::string &require(const std::map<std::string, std::string> &kv, const std::string &key) {
    auto it = kv.find(key);
    if (it == kv.end())
        throw fcs_error("missing_keyword", "missing required keyword " + key);
    return it->second;
}

std::size_t require_count(const std::map<std::string, std::string> &kv, const std::string &key) {
    std::size_t v = 0;
    if (!parse_number(require(kv, key), v))
        throw fcs_error("bad_keyword", "keyword " + key + " is not an integer: '" + kv.at(key) + "'");
    return v;
}

}  // namespace

Dataset parse_fcs(std::string_view bytes) {
    if (bytes.size() < 58)
        throw fcs_error("truncated_header", "file shorter than the 58-byte HEADER");
    const std::string_view version = bytes.substr(0, 6);
    if (version != "FCS3.0" && version != "FCS3.1")
        throw fcs_error("unsupported_version", "unsupported version '" + std::string(version) + "'");

    const std::size_t text_begin = header_offset(bytes, 10, "TEXT begin");
    const std::size_t text_end = header_offset(bytes, 18, "TEXT end");
    std::size_t data_begin = header_offset(bytes, 26, "DATA begin");
    std::size_t data_end = header_offset(bytes, 34, "DATA end");
    if (text_end < text_begin || text_end >= bytes.size())
        throw fcs_error("truncated_text", "TEXT segment [" + std::to_string(text_begin) + ", " +
                                              std::to_string(text_end) + "] exceeds file size " +
                                              std::to_string(bytes.size()));

    const auto kv = parse_text_segment(bytes.substr(text_begin, text_end - text_begin + 1));

    const std::size_t d = require_count(kv, "$PAR");
    const std::size_t n = require_count(kv, "$TOT");
    const std::string datatype = upper(require(kv, "$DATATYPE"));
    if (datatype != "F")
        throw fcs_error("unsupported_datatype", "unsupported datatype $DATATYPE = '" + datatype + "'");
    std::string byteord = require(kv, "$BYTEORD");
    byteord.erase(std::remove_if(byteord.begin(), byteord.end(), [](unsigned char c) { return std::isspace(c); }),
                  byteord.end());
    bool big_endian;
    if (byteord == "1,2,3,4")
        big_endian = false;
    else if (byteord == "4,3,2,1")
        big_endian = true;
    else
        throw fcs_error("unsupported_byteord", "unsupported $BYTEORD = '" + byteord + "'");
    const std::string mode = upper(require(kv, "$MODE"));
    if (mode != "L")
        throw fcs_error("unsupported_mode", "unsupported $MODE = '" + mode + "' (only list mode)");

    std::vector<std::string> names;
    for (std::size_t p = 1; p <= d; ++p) {
        const std::string key = "$P" + std::to_string(p);
        if (require_count(kv, key + "B") != 32)
            throw fcs_error("unsupported_bits", "unsupported " + key + "B = " + kv.at(key + "B") + " (only 32)");
        if (auto it = kv.find(key + "N"); it != kv.end())
            names.push_back(it->second);
        else if (auto its = kv.find(key + "S"); its != kv.end())
            names.push_back(its->second);
        else
            throw fcs_error("missing_keyword", "missing required keyword " + key + "N");
    }

    if (data_begin == 0 && data_end == 0) {
        data_begin = require_count(kv, "$BEGINDATA");
        data_end = require_count(kv, "$ENDDATA");
    }
    if (n == 0 || d == 0)
        throw Error(ErrorKind::Input, "empty_dataset", "empty dataset");
    const std::size_t need = n * d * 4;
    if (data_end < data_begin || data_end >= bytes.size() || data_end - data_begin + 1 < need)
        throw fcs_error("truncated_data", "DATA segment [" + std::to_string(data_begin) + ", " +
                                              std::to_string(data_end) + "] cannot hold " + std::to_string(need) +
                                              " bytes (file size " + std::to_string(bytes.size()) + ")");

    Matrix<float> points(n, d);
    const char *src = bytes.data() + data_begin;
    auto out = points.data();
    for (std::size_t i = 0; i < n * d; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, src + 4 * i, 4);
        if (big_endian == (std::endian::native == std::endian::little))
            bits = __builtin_bswap32(bits);
        out[i] = std::bit_cast<float>(bits);
    }
    return Dataset(std::move(points), std::move(names));
}

Dataset parse_fcs(std::span<const std::byte> bytes) {
    return parse_fcs(std::string_view(reinterpret_cast<const char *>(bytes.data()), bytes.size()));
}

// ---- delimited text ------------------------------------------------------

namespace {

std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(delim, start);
        cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return cells;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn &&fn) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos)
            end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        ++line_no;
        fn(line, line_no);
        start = end + 1;
    }
}

bool is_blank(std::string_view line) { return trim(line).empty(); }

}  // namespace

Dataset parse_delimited(std::string_view text, char delimiter, bool has_header) {
    std::vector<std::string> names;
    std::vector<float> values;
    std::size_t cols = 0;
    std::size_t rows = 0;
    bool header_pending = has_header;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (is_blank(line))
            return;
        const auto cells = split(line, delimiter);
        if (header_pending) {
            for (auto c : cells)
                names.emplace_back(trim(c));
            cols = cells.size();
            header_pending = false;
            return;
        }
        if (cols == 0)
            cols = cells.size();
        if (cells.size() != cols)
            throw Error(ErrorKind::Input, "ragged_row",
                        "ragged row " + std::to_string(rows) + " (line " + std::to_string(line_no) + "): expected " +
                            std::to_string(cols) + " cells, got " + std::to_string(cells.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            float v;
            if (!parse_number(cells[c], v))
                throw Error(ErrorKind::Input, "non_numeric",
                            "non-numeric cell at row " + std::to_string(rows) + ", column " + std::to_string(c) +
                                " (line " + std::to_string(line_no) + "): '" + std::string(cells[c]) + "'");
            values.push_back(v);
        }
        ++rows;
    });
    if (rows == 0)
        throw Error(ErrorKind::Input, "empty_dataset", "empty dataset");
    return Dataset(Matrix<float>(rows, cols, std::move(values)), std::move(names));
}

Dataset parse_delimited_auto(std::string_view text, char delimiter) {
    bool header = false;
    bool decided = false;
    for_each_line(text, [&](std::string_view line, std::size_t) {
        if (decided || is_blank(line))
            return;
        decided = true;
        for (auto c : split(line, delimiter)) {
            float v;
            if (!parse_number(c, v))
                header = true;
        }
    });
    return parse_delimited(text, delimiter, header);
}

std::string write_delimited(const Dataset &data, char delimiter, bool header) {
    std::string out;
    if (header) {
        for (std::size_t j = 0; j < data.dim(); ++j) {
            if (j)
                out += delimiter;
            out += data.dim_names()[j];
        }
        out += '\n';
    }
    char buf[64];
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto r = data.points().row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (j)
                out += delimiter;
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, r[j]);
            out.append(buf, ptr);
        }
        out += '\n';
    }
    return out;
}

// ---- OBJ -----------------------------------------------------------------

Dataset parse_obj_vertices(std::string_view text) {
    std::vector<float> values;
    std::size_t rows = 0;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        line = trim(line);
        if (line.size() < 2 || line[0] != 'v' || !std::isspace(static_cast<unsigned char>(line[1])))
            return;
        std::vector<std::string_view> fields;
        std::size_t i = 1;
        while (i < line.size()) {
            while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
                ++i;
            const std::size_t start = i;
            while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])))
                ++i;
            if (i > start)
                fields.push_back(line.substr(start, i - start));
        }
        if (fields.size() < 3)
            throw Error(ErrorKind::Input, "malformed_vertex",
                        "vertex on line " + std::to_string(line_no) + " has fewer than 3 coordinates");
        for (std::size_t c = 0; c < 3; ++c) {
            float v;
            if (!parse_number(fields[c], v))
                throw Error(ErrorKind::Input, "non_numeric",
                            "non-numeric vertex coordinate on line " + std::to_string(line_no));
            values.push_back(v);
        }
        ++rows;
    });
    if (rows == 0)
        throw Error(ErrorKind::Input, "empty_dataset", "empty dataset");
    return Dataset(Matrix<float>(rows, 3, std::move(values)), {"x", "y", "z"});
}

// ---- transforms ----------------------------------------------------------

TransformKind parse_transform_kind(std::string_view name) {
    if (name == "none") return TransformKind::None;
    if (name == "minmax") return TransformKind::MinMax;
    if (name == "zscore") return TransformKind::ZScore;
    throw Error(ErrorKind::Parameter, "unknown_transform", "unknown transform '" + std::string(name) + "'");
}

const char *to_string(TransformKind kind) noexcept {
    switch (kind) {
    case TransformKind::None: return "none";
    case TransformKind::MinMax: return "minmax";
    case TransformKind::ZScore: return "zscore";
    case TransformKind::Affine: return "affine";
    }
    return "?";
}

TransformSpec uniform_transform(TransformKind kind, std::size_t d) { return TransformSpec(d, Transform{kind}); }

Dataset apply_transform(const Dataset &data, const TransformSpec &spec) {
    const std::size_t d = data.dim();
    if (spec.size() != d)
        throw Error(ErrorKind::Contract, "arity_mismatch",
                    "transform has " + std::to_string(spec.size()) + " entries for " + std::to_string(d) +
                        " dimensions");
    const auto &st = data.stats();
    Matrix<float> out = data.points();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double x = r[j];
            double y = x;
            switch (spec[j].kind) {
            case TransformKind::None: break;
            case TransformKind::MinMax: {
                const double range = st.max[j] - st.min[j];
                y = range > 0 ? (x - st.min[j]) / range : 0.5;
                break;
            }
            case TransformKind::ZScore: y = st.sd[j] > 0 ? (x - st.mean[j]) / st.sd[j] : 0.0; break;
            case TransformKind::Affine: y = spec[j].a * x + spec[j].b; break;
            }
            r[j] = static_cast<float>(y);
        }
    }
    return Dataset(std::move(out), data.dim_names());
}

// ---- files ---------------------------------------------------------------

std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::Io, "read_failed", "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad())
        throw Error(ErrorKind::Io, "read_failed", "error reading '" + path.string() + "'");
    return std::move(ss).str();
}

void write_file(const std::filesystem::path &path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorKind::Io, "write_failed", "cannot open '" + path.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out)
        throw Error(ErrorKind::Io, "write_failed", "error writing '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path &path, std::optional<DataFormat> format,
                     std::optional<TransformKind> transform) {
    const DataFormat fmt = format ? *format : format_from_extension(path);
    const std::string contents = read_file(path);
    Dataset ds = [&] {
        switch (fmt) {
        case DataFormat::Fcs: return parse_fcs(std::string_view(contents));
        case DataFormat::Tsv: return parse_delimited_auto(contents, '\t');
        case DataFormat::Csv: return parse_delimited_auto(contents, ',');
        case DataFormat::Obj: return parse_obj_vertices(contents);
        }
        throw Error(ErrorKind::Parameter, "unknown_format", "unknown format");
    }();
    const TransformKind kind = transform ? *transform : (fmt == DataFormat::Fcs ? TransformKind::ZScore : TransformKind::None);
    if (kind == TransformKind::None)
        return ds;
    return apply_transform(ds, uniform_transform(kind, ds.dim()));
}

}  // namespace embedsom
