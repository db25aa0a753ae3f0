#include "wnet/train.hpp"

namespace wnet {

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows, bool append) {
    std::ofstream f(path, append ? std::ios::app : std::ios::trunc);
    if (!f) throw FormatError("cannot write " + path);
    if (!append) f << "iter,j_reconstr,j_softncut,lr\n";
    f.precision(17);
    for (const auto& r : rows)
        f << r.iter << "," << r.j_reconstr << "," << r.j_softncut << "," << r.lr << "\n";
    if (!f) throw FormatError("short write to " + path);
}

}  // namespace wnet
