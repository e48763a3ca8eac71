#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fpaccel/tensor.hpp"

namespace fpaccel {

// Container for a text header plus named dense tensors, written as the header
// followed by the raw 64-bit little-endian float payload in declaration
// order. Backs checkpoints, problem files, and oracle sidecars.
//
//   fpbundle 1
//   meta <key> <value>
//   tensor <name> <rank> <dim0> <dim1> ...
//   data
//   <raw doubles>
class Bundle {
public:
    void set_meta(const std::string& key, const std::string& value) {
        for (auto& kv : meta_)
            if (kv.first == key) {
                kv.second = value;
                return;
            }
        meta_.emplace_back(key, value);
    }

    void set_meta(const std::string& key, double value) {
        std::ostringstream os;
        os.precision(17);
        os << value;
        set_meta(key, os.str());
    }

    void set_meta(const std::string& key, std::size_t value) {
        set_meta(key, std::to_string(value));
    }

    bool has_meta(const std::string& key) const {
        for (const auto& kv : meta_)
            if (kv.first == key) return true;
        return false;
    }

    const std::string& meta(const std::string& key) const {
        for (const auto& kv : meta_)
            if (kv.first == key) return kv.second;
        throw config_error("bundle: missing meta key '" + key + "'");
    }

    double meta_double(const std::string& key) const { return std::stod(meta(key)); }
    std::size_t meta_size(const std::string& key) const {
        return static_cast<std::size_t>(std::stoull(meta(key)));
    }

    void add(const std::string& name, Tensor t) { tensors_.emplace_back(name, std::move(t)); }

    bool has(const std::string& name) const {
        for (const auto& nt : tensors_)
            if (nt.first == name) return true;
        return false;
    }

    const Tensor& get(const std::string& name) const {
        for (const auto& nt : tensors_)
            if (nt.first == name) return nt.second;
        throw config_error("bundle: missing tensor '" + name + "'");
    }

    const std::vector<std::pair<std::string, std::string>>& all_meta() const { return meta_; }
    const std::vector<std::pair<std::string, Tensor>>& all_tensors() const { return tensors_; }

    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw config_error("bundle: cannot open '" + path + "' for writing");
        out << "fpbundle 1\n";
        for (const auto& kv : meta_) out << "meta " << kv.first << " " << kv.second << "\n";
        for (const auto& nt : tensors_) {
            out << "tensor " << nt.first << " " << nt.second.rank();
            for (std::size_t d : nt.second.shape()) out << " " << d;
            out << "\n";
        }
        out << "data\n";
        for (const auto& nt : tensors_) {
            const Tensor& t = nt.second;
            out.write(reinterpret_cast<const char*>(t.data()),
                      static_cast<std::streamsize>(t.size() * sizeof(double)));
        }
        if (!out) throw numeric_error("bundle: write to '" + path + "' failed");
    }

    static Bundle read(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw config_error("bundle: cannot open '" + path + "'");
        std::string line;
        if (!std::getline(in, line) || line != "fpbundle 1")
            throw config_error("bundle: '" + path + "' has no fpbundle header");
        Bundle b;
        std::vector<std::vector<std::size_t>> shapes;
        while (std::getline(in, line)) {
            if (line == "data") break;
            std::istringstream ls(line);
            std::string tag;
            ls >> tag;
            if (tag == "meta") {
                std::string key;
                ls >> key;
                std::string value;
                std::getline(ls, value);
                if (!value.empty() && value.front() == ' ') value.erase(0, 1);
                b.meta_.emplace_back(key, value);
            } else if (tag == "tensor") {
                std::string name;
                std::size_t rank = 0;
                ls >> name >> rank;
                std::vector<std::size_t> shape(rank);
                for (auto& d : shape) ls >> d;
                if (!ls) throw config_error("bundle: malformed tensor line in '" + path + "'");
                b.tensors_.emplace_back(name, Tensor());
                shapes.push_back(std::move(shape));
            } else {
                throw config_error("bundle: unexpected line '" + line + "' in '" + path + "'");
            }
        }
        for (std::size_t i = 0; i < b.tensors_.size(); ++i) {
            Tensor t(shapes[i]);
            in.read(reinterpret_cast<char*>(t.data()),
                    static_cast<std::streamsize>(t.size() * sizeof(double)));
            if (!in) throw config_error("bundle: truncated payload in '" + path + "'");
            b.tensors_[i].second = std::move(t);
        }
        return b;
    }

private:
    std::vector<std::pair<std::string, std::string>> meta_;
    std::vector<std::pair<std::string, Tensor>> tensors_;
};

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw numeric_error("write to '" + path + "' failed");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// "key value" / "key=value" lines; '#' starts a comment.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        for (auto& ch : line)
            if (ch == '=') ch = ' ';
        std::istringstream ls(line);
        std::string key, value;
        if (!(ls >> key)) continue;
        ls >> value;
        out.emplace_back(key, value);
    }
    return out;
}

}  // namespace fpaccel
