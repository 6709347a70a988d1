#include "file_io.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include "fairfed/error.hpp"

namespace fairfed::detail {

std::string read_text_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(std::string(what) + ": cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(std::string(what) + ": read failed for " + path.string());
  return std::move(ss).str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text,
                     const char* what) {
  const std::filesystem::path dir = path.parent_path();
  if (!dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
      throw Error(std::string(what) + ": cannot create directory " + dir.string() + ": " +
                  ec.message());
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(std::string(what) + ": cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw Error(std::string(what) + ": write failed for " + path.string());
}

}  // namespace fairfed::detail
