#include "badge/util.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>
#include <sstream>
#include <system_error>
#include <thread>

#include "badge/error.hpp"

namespace badge {

std::string version() { return BADGE_VERSION; }

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::MalformedHeader: return "MalformedHeader";
        case ErrorCode::FieldCountMismatch: return "FieldCountMismatch";
        case ErrorCode::NonIntegerScore: return "NonIntegerScore";
        case ErrorCode::InconsistentMapping: return "InconsistentMapping";
        case ErrorCode::AmbiguousMapping: return "AmbiguousMapping";
        case ErrorCode::InvalidMatch: return "InvalidMatch";
        case ErrorCode::TiedFinalScore: return "TiedFinalScore";
        case ErrorCode::InvalidSet: return "InvalidSet";
        case ErrorCode::MissingExemplars: return "MissingExemplars";
        case ErrorCode::EmptyExemplarFile: return "EmptyExemplarFile";
        case ErrorCode::MissingTemplate: return "MissingTemplate";
        case ErrorCode::AuthError: return "AuthError";
        case ErrorCode::RateLimited: return "RateLimited";
        case ErrorCode::Timeout: return "Timeout";
        case ErrorCode::MalformedResponse: return "MalformedResponse";
        case ErrorCode::TransportError: return "TransportError";
        case ErrorCode::InvalidRequest: return "InvalidRequest";
        case ErrorCode::ValidationFailed: return "ValidationFailed";
        case ErrorCode::UnparseableSteps: return "UnparseableSteps";
        case ErrorCode::ScoreParseError: return "ScoreParseError";
        case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
        case ErrorCode::EmptyGroup: return "EmptyGroup";
        case ErrorCode::DuplicateAuthor: return "DuplicateAuthor";
        case ErrorCode::IncompleteResponse: return "IncompleteResponse";
        case ErrorCode::UnknownSession: return "UnknownSession";
        case ErrorCode::NoResponses: return "NoResponses";
        case ErrorCode::NoOverlap: return "NoOverlap";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::ConstantVector: return "ConstantVector";
        case ErrorCode::TooFewPoints: return "TooFewPoints";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("EVP_Digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::string_view trim(std::string_view s) noexcept {
    constexpr std::string_view ws = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            if (pos < text.size()) lines.emplace_back(text.substr(pos));
            break;
        }
        auto line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        pos = nl + 1;
    }
    if (!lines.empty() && !lines.back().empty() && lines.back().back() == '\r') {
        lines.back().pop_back();
    }
    return lines;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw Error(ErrorCode::IoError, "read failed: " + path.string());
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ostringstream tmp_name;
    tmp_name << path.filename().string() << ".tmp." << std::this_thread::get_id();
    const auto tmp = path.parent_path() / tmp_name.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw Error(ErrorCode::IoError, "write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error(ErrorCode::IoError, "rename to " + path.string() + ": " + ec.message());
    }
}

void append_line(const std::filesystem::path& path, std::string_view line) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::IoError, "cannot append to " + path.string());
    out << line << '\n';
    out.flush();
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

bool is_iso_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
        if (s[i] < '0' || s[i] > '9') return false;
    }
    const int y = std::stoi(std::string(s.substr(0, 4)));
    const unsigned m = static_cast<unsigned>(std::stoi(std::string(s.substr(5, 2))));
    const unsigned d = static_cast<unsigned>(std::stoi(std::string(s.substr(8, 2))));
    return std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m},
                                       std::chrono::day{d}}
        .ok();
}

}  // namespace badge
