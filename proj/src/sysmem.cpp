#include "sceneflow/sysmem.hpp"

#include <fstream>
#include <sstream>
#include <string>

namespace sceneflow {

size_t peak_rss_bytes() {
    std::ifstream in("/proc/self/status");
    if (!in) return 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("VmHWM:", 0) != 0) continue;
        std::stringstream ss(line.substr(6));
        size_t kb = 0;
        ss >> kb;
        return kb * 1024;
    }
    return 0;
}

bool reset_peak_rss() {
    // "5" asks the kernel to reset the RSS high-water mark for this process.
    std::ofstream out("/proc/self/clear_refs");
    if (!out) return false;
    out << "5";
    return static_cast<bool>(out);
}

}  // namespace sceneflow
