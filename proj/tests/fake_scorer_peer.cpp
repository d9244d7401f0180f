// Scorer peer used by the transport tests. Reads request frames on stdin and
// answers on stdout according to the mode:
//   constant <V>          fixed logits from fake_peer_logits(V)
//   close-after <V> <N>   like constant, then exits after N responses
//   version <V>           answers with protocol version 2
//   short <V>             answers with V-1 logits
//   garbage <V>           answers with a non-JSON line
//   error <V>             answers with an error frame
#include <cstdlib>
#include <iostream>
#include <string>

#include "fake_peer_logits.hpp"
#include "symode/wire.hpp"

int main(int argc, char** argv) {
    if (argc < 3) return 2;
    const std::string mode = argv[1];
    const int v = std::atoi(argv[2]);
    const long limit = argc > 3 ? std::atol(argv[3]) : -1;
    std::string line;
    long answered = 0;
    while (std::getline(std::cin, line)) {
        if (limit >= 0 && answered >= limit) return 0;
        try {
            symode::decode_request(line);
        } catch (const symode::ScorerError& e) {
            std::cout << symode::encode_error(e.what()) << std::flush;
            continue;
        }
        std::vector<double> logits = symode::testing::fake_peer_logits(v);
        if (mode == "version")
            std::cout << "{\"logits\":[],\"v\":2}\n";
        else if (mode == "short")
            std::cout << symode::encode_response({logits.begin(), logits.end() - 1});
        else if (mode == "garbage")
            std::cout << "this is not json\n";
        else if (mode == "error")
            std::cout << symode::encode_error("model not loaded");
        else
            std::cout << symode::encode_response(logits);
        std::cout << std::flush;
        ++answered;
    }
    return 0;
}
