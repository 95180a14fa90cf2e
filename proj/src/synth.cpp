#include "tabitd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "tabitd/errors.hpp"
#include "tabitd/rng.hpp"

namespace tabitd::synth {

using rng::Engine;

void SynthConfig::validate() const {
    if (ids_rows < 10) throw ConfigError("datagen: ids_rows must be >= 10");
    if (ueba_rows < 10) throw ConfigError("datagen: ueba_rows must be >= 10");
    double rest = normal_fraction + dos_fraction + probe_fraction + r2l_fraction;
    if (!(normal_fraction > 0 && dos_fraction > 0 && probe_fraction > 0 && r2l_fraction > 0) ||
        rest >= 1.0)
        throw ConfigError("datagen: class fractions must be positive and sum below 1");
    if (!(malicious_fraction > 0.0 && malicious_fraction < 1.0))
        throw ConfigError("datagen: malicious_fraction must be in (0, 1)");
}

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double pos(Engine& eng, double mean, double sd) { return std::fabs(eng.normal(mean, sd)); }

double cnt(Engine& eng, double mean, double sd) { return std::floor(pos(eng, mean, sd)); }

double rate(Engine& eng, double mean, double sd) { return clamp01(eng.normal(mean, sd)); }

double flag01(Engine& eng, double p) { return eng.bernoulli(p) ? 1.0 : 0.0; }

/// Weighted categorical pick; weights need not sum to 1.
const char* pick(Engine& eng, const std::vector<std::pair<const char*, double>>& options) {
    double total = 0.0;
    for (const auto& [_, w] : options) total += w;
    double u = eng.uniform01() * total;
    for (const auto& [name, w] : options) {
        if (u < w) return name;
        u -= w;
    }
    return options.back().first;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct IdsRow {
    double duration = 0;
    const char* protocol = "tcp";
    const char* service = "http";
    const char* flag = "SF";
    double src_bytes = 0, dst_bytes = 0, land = 0, wrong_fragment = 0, urgent = 0, hot = 0;
    double num_failed_logins = 0, logged_in = 0, num_compromised = 0, root_shell = 0;
    double su_attempted = 0, num_root = 0, num_file_creations = 0, num_shells = 0;
    double num_access_files = 0, num_outbound_cmds = 0, is_host_login = 0, is_guest_login = 0;
    double count = 0, srv_count = 0, serror_rate = 0, srv_serror_rate = 0, rerror_rate = 0;
    double srv_rerror_rate = 0, same_srv_rate = 0, diff_srv_rate = 0, srv_diff_host_rate = 0;
    double dst_host_count = 0, dst_host_srv_count = 0, dst_host_same_srv_rate = 0;
    double dst_host_diff_srv_rate = 0, dst_host_same_src_port_rate = 0;
    double dst_host_srv_diff_host_rate = 0, dst_host_serror_rate = 0;
    double dst_host_srv_serror_rate = 0, dst_host_rerror_rate = 0, dst_host_srv_rerror_rate = 0;
    std::string label;

    void write(std::ostream& os) const {
        os << num(duration) << ',' << protocol << ',' << service << ',' << flag << ','
           << num(src_bytes) << ',' << num(dst_bytes) << ',' << num(land) << ','
           << num(wrong_fragment) << ',' << num(urgent) << ',' << num(hot) << ','
           << num(num_failed_logins) << ',' << num(logged_in) << ',' << num(num_compromised)
           << ',' << num(root_shell) << ',' << num(su_attempted) << ',' << num(num_root) << ','
           << num(num_file_creations) << ',' << num(num_shells) << ',' << num(num_access_files)
           << ',' << num(num_outbound_cmds) << ',' << num(is_host_login) << ','
           << num(is_guest_login) << ',' << num(count) << ',' << num(srv_count) << ','
           << num(serror_rate) << ',' << num(srv_serror_rate) << ',' << num(rerror_rate) << ','
           << num(srv_rerror_rate) << ',' << num(same_srv_rate) << ',' << num(diff_srv_rate)
           << ',' << num(srv_diff_host_rate) << ',' << num(dst_host_count) << ','
           << num(dst_host_srv_count) << ',' << num(dst_host_same_srv_rate) << ','
           << num(dst_host_diff_srv_rate) << ',' << num(dst_host_same_src_port_rate) << ','
           << num(dst_host_srv_diff_host_rate) << ',' << num(dst_host_serror_rate) << ','
           << num(dst_host_srv_serror_rate) << ',' << num(dst_host_rerror_rate) << ','
           << num(dst_host_srv_rerror_rate) << ',' << label << '\n';
    }
};

/// Rare bookkeeping noise shared by all profiles so no column is constant,
/// even in corpora of a thousand rows. Fields a profile already set keep
/// their class-conditioned value; only zeros pick up background noise.
void sprinkle(Engine& eng, IdsRow& r) {
    r.land = flag01(eng, 0.01);
    r.wrong_fragment = eng.bernoulli(0.012) ? cnt(eng, 1.5, 0.8) + 1 : 0.0;
    r.urgent = flag01(eng, 0.012);
    r.num_outbound_cmds = eng.bernoulli(0.015) ? 1.0 : 0.0;
    r.is_host_login = flag01(eng, 0.01);
    if (r.su_attempted == 0.0) r.su_attempted = flag01(eng, 0.012);
    if (r.root_shell == 0.0) r.root_shell = flag01(eng, 0.012);
    if (r.num_compromised == 0.0) r.num_compromised = flag01(eng, 0.015);
    if (r.num_root == 0.0) r.num_root = eng.bernoulli(0.012) ? cnt(eng, 1.4, 0.7) + 1 : 0.0;
    if (r.num_shells == 0.0) r.num_shells = flag01(eng, 0.012);
    if (r.num_access_files == 0.0) r.num_access_files = flag01(eng, 0.015);
    if (r.num_failed_logins == 0.0) r.num_failed_logins = flag01(eng, 0.015);
    if (r.num_file_creations == 0.0)
        r.num_file_creations = eng.bernoulli(0.015) ? cnt(eng, 1.4, 0.8) + 1 : 0.0;
    if (r.hot == 0.0) r.hot = eng.bernoulli(0.02) ? cnt(eng, 1.6, 0.8) + 1 : 0.0;
    if (r.is_guest_login == 0.0) r.is_guest_login = flag01(eng, 0.015);
    if (r.logged_in == 0.0) r.logged_in = flag01(eng, 0.05);
    if (r.duration == 0.0) r.duration = eng.bernoulli(0.05) ? pos(eng, 4, 3) : 0.0;
    if (r.dst_bytes == 0.0) r.dst_bytes = eng.bernoulli(0.05) ? pos(eng, 40, 30) : 0.0;
}

IdsRow gen_normal(Engine& eng) {
    IdsRow r;
    r.label = "normal";
    r.duration = pos(eng, 15, 30);
    r.protocol = pick(eng, {{"tcp", 0.7}, {"udp", 0.2}, {"icmp", 0.1}});
    r.service = pick(eng, {{"http", 0.5}, {"smtp", 0.15}, {"ftp_data", 0.1}, {"domain_u", 0.12},
                           {"telnet", 0.05}, {"other", 0.08}});
    r.flag = pick(eng, {{"SF", 0.9}, {"REJ", 0.06}, {"S0", 0.04}});
    r.src_bytes = pos(eng, 230, 130);
    r.dst_bytes = pos(eng, 1500, 900);
    r.hot = eng.bernoulli(0.03) ? cnt(eng, 1.6, 0.8) + 1 : 0.0;
    r.num_failed_logins = flag01(eng, 0.01);
    r.logged_in = flag01(eng, 0.72);
    r.num_compromised = flag01(eng, 0.005);
    r.root_shell = flag01(eng, 0.002);
    r.su_attempted = flag01(eng, 0.002);
    r.num_root = eng.bernoulli(0.004) ? cnt(eng, 1.4, 0.7) + 1 : 0.0;
    r.num_file_creations = eng.bernoulli(0.02) ? cnt(eng, 1.4, 0.8) + 1 : 0.0;
    r.num_shells = flag01(eng, 0.005);
    r.num_access_files = flag01(eng, 0.012);
    r.is_guest_login = flag01(eng, 0.03);
    r.count = cnt(eng, 9, 6) + 1;
    r.srv_count = cnt(eng, 7, 5) + 1;
    r.serror_rate = rate(eng, 0.03, 0.05);
    r.srv_serror_rate = rate(eng, 0.03, 0.05);
    r.rerror_rate = rate(eng, 0.02, 0.04);
    r.srv_rerror_rate = rate(eng, 0.02, 0.04);
    r.same_srv_rate = rate(eng, 0.85, 0.12);
    r.diff_srv_rate = rate(eng, 0.06, 0.06);
    r.srv_diff_host_rate = rate(eng, 0.1, 0.08);
    r.dst_host_count = cnt(eng, 150, 80) + 1;
    r.dst_host_srv_count = cnt(eng, 120, 70) + 1;
    r.dst_host_same_srv_rate = rate(eng, 0.8, 0.15);
    r.dst_host_diff_srv_rate = rate(eng, 0.07, 0.06);
    r.dst_host_same_src_port_rate = rate(eng, 0.15, 0.12);
    r.dst_host_srv_diff_host_rate = rate(eng, 0.05, 0.05);
    r.dst_host_serror_rate = rate(eng, 0.03, 0.05);
    r.dst_host_srv_serror_rate = rate(eng, 0.03, 0.05);
    r.dst_host_rerror_rate = rate(eng, 0.03, 0.05);
    r.dst_host_srv_rerror_rate = rate(eng, 0.03, 0.05);
    sprinkle(eng, r);
    return r;
}

IdsRow gen_dos(Engine& eng) {
    IdsRow r;
    const char* kind = pick(eng, {{"neptune", 0.6}, {"smurf", 0.3}, {"back", 0.1}});
    r.label = kind;
    if (r.label == "neptune") {
        r.duration = 0.0;
        r.protocol = "tcp";
        r.service = pick(eng, {{"private", 0.8}, {"other", 0.2}});
        r.flag = pick(eng, {{"S0", 0.92}, {"REJ", 0.08}});
        r.src_bytes = cnt(eng, 2, 3);
        r.dst_bytes = 0.0;
        r.count = cnt(eng, 210, 60) + 20;
        r.srv_count = cnt(eng, 14, 8) + 1;
        r.serror_rate = rate(eng, 0.96, 0.04);
        r.srv_serror_rate = rate(eng, 0.95, 0.05);
        r.same_srv_rate = rate(eng, 0.06, 0.05);
        r.diff_srv_rate = rate(eng, 0.07, 0.05);
        r.dst_host_count = 255 - cnt(eng, 3, 4);
        r.dst_host_srv_count = cnt(eng, 18, 10) + 1;
        r.dst_host_same_srv_rate = rate(eng, 0.06, 0.05);
        r.dst_host_diff_srv_rate = rate(eng, 0.07, 0.05);
        r.dst_host_serror_rate = rate(eng, 0.96, 0.04);
        r.dst_host_srv_serror_rate = rate(eng, 0.95, 0.05);
    } else if (r.label == "smurf") {
        r.duration = 0.0;
        r.protocol = "icmp";
        r.service = "ecr_i";
        r.flag = "SF";
        r.src_bytes = pos(eng, 1032, 60);
        r.dst_bytes = 0.0;
        r.count = cnt(eng, 480, 80) + 50;
        r.srv_count = cnt(eng, 480, 80) + 50;
        r.same_srv_rate = rate(eng, 0.98, 0.02);
        r.diff_srv_rate = rate(eng, 0.01, 0.02);
        r.dst_host_count = 255 - cnt(eng, 2, 3);
        r.dst_host_srv_count = 255 - cnt(eng, 2, 3);
        r.dst_host_same_srv_rate = rate(eng, 0.98, 0.03);
        r.dst_host_same_src_port_rate = rate(eng, 0.85, 0.1);
    } else { // back: HTTP request flood with oversized payloads
        r.duration = pos(eng, 2, 3);
        r.protocol = "tcp";
        r.service = "http";
        r.flag = "SF";
        r.src_bytes = pos(eng, 54000, 6000);
        r.dst_bytes = pos(eng, 8000, 2500);
        r.hot = cnt(eng, 2, 1);
        r.logged_in = 1.0;
        r.count = cnt(eng, 12, 6) + 2;
        r.srv_count = cnt(eng, 10, 5) + 2;
        r.same_srv_rate = rate(eng, 0.95, 0.05);
        r.dst_host_count = cnt(eng, 180, 60) + 10;
        r.dst_host_srv_count = cnt(eng, 160, 60) + 10;
        r.dst_host_same_srv_rate = rate(eng, 0.95, 0.05);
    }
    r.rerror_rate = rate(eng, 0.02, 0.03);
    r.srv_rerror_rate = rate(eng, 0.02, 0.03);
    r.srv_diff_host_rate = rate(eng, 0.03, 0.04);
    r.dst_host_rerror_rate = rate(eng, 0.03, 0.04);
    r.dst_host_srv_rerror_rate = rate(eng, 0.03, 0.04);
    if (r.label != "smurf") r.dst_host_same_src_port_rate = rate(eng, 0.1, 0.1);
    r.dst_host_srv_diff_host_rate = rate(eng, 0.03, 0.04);
    sprinkle(eng, r);
    return r;
}

IdsRow gen_probe(Engine& eng) {
    IdsRow r;
    const char* kind =
        pick(eng, {{"satan", 0.35}, {"ipsweep", 0.3}, {"portsweep", 0.25}, {"nmap", 0.1}});
    r.label = kind;
    r.duration = eng.bernoulli(0.7) ? 0.0 : pos(eng, 10, 15);
    r.protocol = pick(eng, {{"tcp", 0.6}, {"icmp", 0.3}, {"udp", 0.1}});
    r.service = pick(eng, {{"private", 0.4}, {"eco_i", 0.3}, {"http", 0.1}, {"other", 0.2}});
    r.flag = pick(eng, {{"REJ", 0.4}, {"SH", 0.25}, {"S0", 0.2}, {"SF", 0.15}});
    r.src_bytes = cnt(eng, 12, 10);
    r.dst_bytes = eng.bernoulli(0.6) ? 0.0 : cnt(eng, 40, 35);
    r.count = cnt(eng, 18, 12) + 1;
    r.srv_count = cnt(eng, 4, 3) + 1;
    r.serror_rate = rate(eng, 0.25, 0.2);
    r.srv_serror_rate = rate(eng, 0.22, 0.2);
    r.rerror_rate = rate(eng, 0.55, 0.25);
    r.srv_rerror_rate = rate(eng, 0.5, 0.25);
    r.same_srv_rate = rate(eng, 0.12, 0.1);
    r.diff_srv_rate = rate(eng, 0.72, 0.15);
    r.srv_diff_host_rate = rate(eng, 0.45, 0.2);
    r.dst_host_count = cnt(eng, 120, 80) + 5;
    r.dst_host_srv_count = cnt(eng, 12, 9) + 1;
    r.dst_host_same_srv_rate = rate(eng, 0.1, 0.08);
    r.dst_host_diff_srv_rate = rate(eng, 0.68, 0.18);
    r.dst_host_same_src_port_rate = rate(eng, 0.55, 0.25);
    r.dst_host_srv_diff_host_rate = rate(eng, 0.35, 0.2);
    r.dst_host_serror_rate = rate(eng, 0.25, 0.2);
    r.dst_host_srv_serror_rate = rate(eng, 0.22, 0.2);
    r.dst_host_rerror_rate = rate(eng, 0.5, 0.25);
    r.dst_host_srv_rerror_rate = rate(eng, 0.45, 0.25);
    sprinkle(eng, r);
    return r;
}

IdsRow gen_r2l(Engine& eng) {
    IdsRow r;
    const char* kind =
        pick(eng, {{"guess_passwd", 0.55}, {"warezclient", 0.3}, {"ftp_write", 0.15}});
    r.label = kind;
    r.duration = pos(eng, 60, 45);
    r.protocol = "tcp";
    r.flag = pick(eng, {{"SF", 0.7}, {"RSTO", 0.3}});
    r.count = cnt(eng, 2, 1.5) + 1;
    r.srv_count = cnt(eng, 2, 1.5) + 1;
    if (r.label == "guess_passwd") {
        r.service = pick(eng, {{"telnet", 0.55}, {"ftp", 0.3}, {"imap4", 0.15}});
        r.num_failed_logins = cnt(eng, 3.2, 1.2) + 1;
        r.hot = cnt(eng, 1.5, 0.8);
        r.logged_in = flag01(eng, 0.25);
        r.src_bytes = pos(eng, 130, 60);
        r.dst_bytes = pos(eng, 350, 150);
    } else if (r.label == "warezclient") {
        r.service = pick(eng, {{"ftp", 0.55}, {"ftp_data", 0.45}});
        r.is_guest_login = flag01(eng, 0.85);
        r.logged_in = 1.0;
        r.hot = cnt(eng, 2.5, 1.5) + 1;
        r.src_bytes = pos(eng, 900, 450);
        r.dst_bytes = pos(eng, 12000, 6000);
    } else { // ftp_write
        r.service = pick(eng, {{"ftp", 0.6}, {"ftp_data", 0.4}});
        r.logged_in = 1.0;
        r.num_file_creations = cnt(eng, 1.6, 0.8) + 1;
        r.num_access_files = cnt(eng, 1.4, 0.7) + 1;
        r.src_bytes = pos(eng, 250, 120);
        r.dst_bytes = pos(eng, 480, 220);
    }
    r.same_srv_rate = rate(eng, 0.9, 0.1);
    r.diff_srv_rate = rate(eng, 0.04, 0.04);
    r.srv_diff_host_rate = rate(eng, 0.08, 0.08);
    r.serror_rate = rate(eng, 0.02, 0.03);
    r.srv_serror_rate = rate(eng, 0.02, 0.03);
    r.rerror_rate = rate(eng, 0.08, 0.1);
    r.srv_rerror_rate = rate(eng, 0.08, 0.1);
    r.dst_host_count = cnt(eng, 25, 20) + 1;
    r.dst_host_srv_count = cnt(eng, 18, 14) + 1;
    r.dst_host_same_srv_rate = rate(eng, 0.75, 0.2);
    r.dst_host_diff_srv_rate = rate(eng, 0.06, 0.06);
    r.dst_host_same_src_port_rate = rate(eng, 0.3, 0.2);
    r.dst_host_srv_diff_host_rate = rate(eng, 0.1, 0.1);
    r.dst_host_serror_rate = rate(eng, 0.03, 0.04);
    r.dst_host_srv_serror_rate = rate(eng, 0.03, 0.04);
    r.dst_host_rerror_rate = rate(eng, 0.1, 0.12);
    r.dst_host_srv_rerror_rate = rate(eng, 0.1, 0.12);
    sprinkle(eng, r);
    return r;
}

IdsRow gen_u2r(Engine& eng) {
    IdsRow r;
    const char* kind =
        pick(eng, {{"buffer_overflow", 0.5}, {"rootkit", 0.3}, {"loadmodule", 0.2}});
    r.label = kind;
    r.duration = pos(eng, 120, 90);
    r.protocol = "tcp";
    r.service = pick(eng, {{"telnet", 0.6}, {"ftp_data", 0.25}, {"other", 0.15}});
    r.flag = "SF";
    r.logged_in = 1.0;
    r.root_shell = flag01(eng, 0.85);
    r.su_attempted = eng.bernoulli(0.4) ? cnt(eng, 1.4, 0.6) + 1 : 0.0;
    r.num_root = cnt(eng, 4, 2) + 1;
    r.num_file_creations = cnt(eng, 2.8, 1.6) + 1;
    r.num_shells = flag01(eng, 0.5);
    r.num_access_files = eng.bernoulli(0.4) ? cnt(eng, 1.5, 0.8) + 1 : 0.0;
    r.num_compromised = cnt(eng, 2, 1.4);
    r.hot = cnt(eng, 3, 1.8) + 1;
    r.src_bytes = pos(eng, 1500, 700);
    r.dst_bytes = pos(eng, 2600, 1100);
    r.count = cnt(eng, 2, 1.2) + 1;
    r.srv_count = cnt(eng, 2, 1.2) + 1;
    r.same_srv_rate = rate(eng, 0.9, 0.1);
    r.diff_srv_rate = rate(eng, 0.04, 0.04);
    r.srv_diff_host_rate = rate(eng, 0.05, 0.06);
    r.serror_rate = rate(eng, 0.02, 0.03);
    r.srv_serror_rate = rate(eng, 0.02, 0.03);
    r.rerror_rate = rate(eng, 0.03, 0.04);
    r.srv_rerror_rate = rate(eng, 0.03, 0.04);
    r.dst_host_count = cnt(eng, 12, 9) + 1;
    r.dst_host_srv_count = cnt(eng, 9, 7) + 1;
    r.dst_host_same_srv_rate = rate(eng, 0.8, 0.15);
    r.dst_host_diff_srv_rate = rate(eng, 0.05, 0.05);
    r.dst_host_same_src_port_rate = rate(eng, 0.25, 0.18);
    r.dst_host_srv_diff_host_rate = rate(eng, 0.08, 0.08);
    r.dst_host_serror_rate = rate(eng, 0.02, 0.03);
    r.dst_host_srv_serror_rate = rate(eng, 0.02, 0.03);
    r.dst_host_rerror_rate = rate(eng, 0.04, 0.05);
    r.dst_host_srv_rerror_rate = rate(eng, 0.04, 0.05);
    sprinkle(eng, r);
    return r;
}

} // namespace

void write_ids_csv(std::ostream& os, const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.ids_rows;
    auto share = [&](double f) {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(
                                            f * static_cast<double>(n) + 0.5)));
    };
    std::size_t n_normal = share(cfg.normal_fraction);
    std::size_t n_dos = share(cfg.dos_fraction);
    std::size_t n_probe = share(cfg.probe_fraction);
    std::size_t n_r2l = share(cfg.r2l_fraction);
    if (n_normal + n_dos + n_probe + n_r2l + 1 > n)
        throw ConfigError("datagen: ids_rows too small for the class mix");
    std::size_t n_u2r = n - n_normal - n_dos - n_probe - n_r2l;

    // 0=normal 1=dos 2=probe 3=r2l 4=u2r, exact counts, then one shuffle.
    std::vector<int> plan;
    plan.reserve(n);
    plan.insert(plan.end(), n_normal, 0);
    plan.insert(plan.end(), n_dos, 1);
    plan.insert(plan.end(), n_probe, 2);
    plan.insert(plan.end(), n_r2l, 3);
    plan.insert(plan.end(), n_u2r, 4);
    Engine order(rng::derive_seed(cfg.seed, "synth-ids-order"));
    order.shuffle(plan);

    Engine eng(rng::derive_seed(cfg.seed, "synth-ids"));
    for (int cls : plan) {
        IdsRow r;
        switch (cls) {
            case 0: r = gen_normal(eng); break;
            case 1: r = gen_dos(eng); break;
            case 2: r = gen_probe(eng); break;
            case 3: r = gen_r2l(eng); break;
            default: r = gen_u2r(eng); break;
        }
        r.write(os);
    }
}

void write_ueba_csv(std::ostream& os, const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.ueba_rows;
    auto n_mal = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::floor(cfg.malicious_fraction * static_cast<double>(n) + 0.5)));
    if (n_mal >= n) throw ConfigError("datagen: ueba_rows too small for the class mix");

    std::vector<int> plan;
    plan.reserve(n);
    plan.insert(plan.end(), n - n_mal, 0);
    plan.insert(plan.end(), n_mal, 1);
    Engine order(rng::derive_seed(cfg.seed, "synth-ueba-order"));
    order.shuffle(plan);

    os << "logon_count,after_hours_fraction,distinct_hosts,http_upload_mb,http_download_mb,"
          "email_sent,email_attach_mb,usb_events,file_copies,failed_logons,role,device_type,"
          "label\n";
    Engine eng(rng::derive_seed(cfg.seed, "synth-ueba"));
    for (int cls : plan) {
        if (cls == 0) {
            os << num(cnt(eng, 22, 7) + 1) << ',' << num(rate(eng, 0.08, 0.07)) << ','
               << num(cnt(eng, 2.2, 1.5) + 1) << ',' << num(pos(eng, 4, 3)) << ','
               << num(pos(eng, 60, 30)) << ',' << num(cnt(eng, 15, 8)) << ','
               << num(pos(eng, 3, 2.5)) << ','
               << num(eng.bernoulli(0.15) ? cnt(eng, 1.5, 1) + 1 : 0.0) << ','
               << num(cnt(eng, 6, 4)) << ',' << num(cnt(eng, 0.4, 0.7)) << ','
               << pick(eng, {{"engineer", 0.35}, {"analyst", 0.25}, {"sales", 0.15},
                             {"hr", 0.1}, {"admin", 0.15}})
               << ','
               << pick(eng, {{"laptop", 0.6}, {"desktop", 0.3}, {"server", 0.1}})
               << ",benign\n";
        } else {
            os << num(cnt(eng, 30, 9) + 1) << ',' << num(rate(eng, 0.45, 0.15)) << ','
               << num(cnt(eng, 7, 3) + 1) << ',' << num(pos(eng, 60, 30)) << ','
               << num(pos(eng, 120, 60)) << ',' << num(cnt(eng, 22, 10)) << ','
               << num(pos(eng, 14, 7)) << ',' << num(cnt(eng, 5, 2.5) + 1) << ','
               << num(cnt(eng, 35, 15) + 1) << ',' << num(cnt(eng, 3, 2)) << ','
               << pick(eng, {{"admin", 0.3}, {"engineer", 0.3}, {"analyst", 0.2},
                             {"sales", 0.1}, {"hr", 0.1}})
               << ','
               << pick(eng, {{"laptop", 0.45}, {"desktop", 0.25}, {"server", 0.3}})
               << ",malicious\n";
        }
    }
}

} // namespace tabitd::synth
