#pragma once

#include <string>
#include <vector>

namespace tsab {

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// RFC-style quoting for cells containing separators or quotes; doubles
// should be formatted with fmt_double so a read-back is drift-free.
void write_csv(const std::string& path, const Csv& csv);
Csv read_csv(const std::string& path);

}  // namespace tsab
