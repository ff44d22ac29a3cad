#pragma once

#include <cctype>
#include <sstream>
#include <string>
#include <vector>

namespace gmnet {

// Shared caption tokenizer: lowercase, whitespace split, strip terminal
// punctuation from token ends. Token lists produced here feed both caption
// encoding and metric computation, so the two sides always agree.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) {
        for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        while (!tok.empty()) {
            const char last = tok.back();
            if (last == '.' || last == ',' || last == '!' || last == '?' ||
                last == ';' || last == ':') {
                tok.pop_back();
            } else {
                break;
            }
        }
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

} // namespace gmnet
