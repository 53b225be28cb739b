#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>

#include "grs/error.hpp"

namespace grs::detail {

/// Writes `contents` to a sibling temp file, then renames it over `path`.
/// On failure the temp file is removed and `path` is left untouched.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (out) out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
      fs::remove(tmp, ec);
      throw Error(ErrorCode::kIo, "cannot write " + tmp.string(), tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::kIo, "cannot rename onto " + path.string(), path.string());
  }
}

}  // namespace grs::detail
