#include "spanova/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "spanova/parallel.hpp"
#include "spanova/tsv.hpp"

namespace spanova {

double effect_inclusion_prob(double pi, double psi, double tau, double S, double c) {
    if (pi <= 0.0) return 0.0;
    if (pi >= 1.0) return 1.0;
    const double d = psi + tau * S;
    const double logBF = 0.5 * std::log(psi / d) + tau * c * c / (2.0 * psi * d);
    const double logOdds = std::log(pi / (1.0 - pi)) + logBF;
    if (logOdds > 36.0) return 1.0;
    if (logOdds < -36.0) return 0.0;
    return 1.0 / (1.0 + std::exp(-logOdds));
}

double pi_zero_mass(double rho, double m) {
    return (1.0 - rho) / ((1.0 - rho) + rho * (1.0 - m));
}

namespace {

Vector expand_override(const std::vector<double>& v, int len, const char* name) {
    Vector out(len);
    if (static_cast<int>(v.size()) == 1)
        out.setConstant(v[0]);
    else if (static_cast<int>(v.size()) == len)
        for (int i = 0; i < len; ++i) out[i] = v[static_cast<std::size_t>(i)];
    else
        throw ValidationError(std::string("fixed ") + name + " override must be scalar or length " +
                              std::to_string(len));
    return out;
}

}  // namespace

GibbsSampler::GibbsSampler(const RowMatrix& X, const Matrix& H, const HyperParameters& h,
                           const McmcControl& c)
    : X_(X), H_(H), hp_(h), ctl_(c) {
    p_ = static_cast<int>(X_.rows());
    n_ = static_cast<int>(X_.cols());
    K_ = static_cast<int>(H_.cols());
    if (H_.rows() != n_) throw ValidationError("design rows do not match sample count");
    if (p_ < 1 || K_ < 1) throw ValidationError("need at least one gene and one design column");
    const auto violations = validate(h, c);
    if (!violations.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& v : violations) msg += " " + v + ";";
        throw ValidationError(msg);
    }

    if (c.fixed.tau) fixedTau_ = expand_override(*c.fixed.tau, K_ - 1, "tau");
    if (c.fixed.psi) fixedPsi_ = expand_override(*c.fixed.psi, p_, "psi");
    if (c.fixed.rho) fixedRho_ = expand_override(*c.fixed.rho, K_ - 1, "rho");
    if (c.fixed.pi) {
        piFixed_ = true;
        piValue_ = *c.fixed.pi;
    }

    colS_.resize(K_);
    for (int j = 0; j < K_; ++j) colS_[j] = H_.col(j).squaredNorm();

    st_.B = Matrix::Zero(p_, K_);
    st_.Z = IntMatrix::Zero(p_, K_);
    st_.Z.col(0).setOnes();
    st_.Pi = Matrix::Zero(p_, K_);
    st_.Pi.col(0).setOnes();
    st_.rho = Vector::Constant(K_, h.r);
    st_.rho[0] = 1.0;
    st_.tau = Vector::Constant(K_, h.priorTauMean());
    st_.tau[0] = h.tau1;
    st_.psi = Vector::Constant(p_, h.priorPsiMean());
    for (int g = 0; g < p_; ++g) {
        if (n_ > 0) {
            st_.B(g, 0) = X_.row(g).mean();
            double var = 0.0;
            if (n_ > 1) {
                const double mu = st_.B(g, 0);
                var = (X_.row(g).array() - mu).square().sum() / (n_ - 1);
            }
            st_.psi[g] = std::max(var, 1e-6);
        } else {
            st_.B(g, 0) = h.b;
        }
    }
    if (fixedTau_.size()) st_.tau.tail(K_ - 1) = fixedTau_;
    if (fixedPsi_.size()) st_.psi = fixedPsi_;
    if (fixedRho_.size()) st_.rho.tail(K_ - 1) = fixedRho_;
    if (piFixed_)
        for (int j = 1; j < K_; ++j) st_.Pi.col(j).setConstant(piValue_);

    st_.rng = Rng(c.seed);
    st_.iteration = 0;

    R_ = X_;
    if (n_ > 0) R_.noalias() -= st_.B * H_.transpose();

    acc_.sumZ = Matrix::Zero(p_, K_);
    acc_.sumBeta = Matrix::Zero(p_, K_);
    acc_.sumBetaSq = Matrix::Zero(p_, K_);
    acc_.sumRho = Vector::Zero(K_);
    acc_.sumTau = Vector::Zero(K_);
    acc_.sumPsi = Vector::Zero(p_);
    acc_.saved = 0;
}

void GibbsSampler::set_data(const RowMatrix& X) {
    if (X.rows() != p_ || X.cols() != n_) throw ValidationError("data shape changed");
    X_ = X;
    R_ = X_;
    if (n_ > 0) R_.noalias() -= st_.B * H_.transpose();
}

void GibbsSampler::gene_update(int g, Rng& rng) {
    static double dummy = 0.0;
    Eigen::Map<Vector> r(n_ > 0 ? R_.row(g).data() : &dummy, n_);
    const double psi = st_.psi[g];

    {
        const auto h1 = H_.col(0);
        const double old = st_.B(g, 0);
        if (n_ > 0 && old != 0.0) r += old * h1;
        double mu = hp_.b, v = hp_.tau1;
        if (n_ > 0 && colS_[0] > 0.0) {
            v = 1.0 / (colS_[0] / psi + 1.0 / hp_.tau1);
            mu = v * (h1.dot(r) / psi + hp_.b / hp_.tau1);
        }
        const double fresh = rng.normal(mu, v);
        if (n_ > 0) r -= fresh * h1;
        st_.B(g, 0) = fresh;
    }

    for (int j = 1; j < K_; ++j) {
        const auto hj = H_.col(j);
        const double S = colS_[j];
        const double tau = st_.tau[j];
        const double pi = st_.Pi(g, j);
        if (n_ > 0 && st_.Z(g, j) == 1) r += st_.B(g, j) * hj;

        int z;
        double mean = 0.0, var = tau;
        if (n_ == 0) {
            z = (pi <= 0.0) ? 0 : (pi >= 1.0 ? 1 : (rng.bernoulli(pi) ? 1 : 0));
        } else if (S <= 0.0) {
            z = 0;  // degenerate column carries no information; forced out
        } else if (pi <= 0.0) {
            z = 0;
        } else {
            const double c = hj.dot(r);
            const double p1 = effect_inclusion_prob(pi, psi, tau, S, c);
            z = rng.bernoulli(p1) ? 1 : 0;
            if (z == 1) {
                const double d = psi + tau * S;
                mean = tau * c / d;
                var = psi * tau / d;
            }
        }
        double beta = 0.0;
        if (z == 1) {
            beta = rng.normal(mean, var);
            if (n_ > 0) r -= beta * hj;
        }
        st_.Z(g, j) = z;
        st_.B(g, j) = beta;
    }
}

void GibbsSampler::column_update(int j, Rng& rng) {
    if (!piFixed_) {
        const double am = hp_.a * hp_.m;
        const double a1m = hp_.a * (1.0 - hp_.m);
        const double p0 = pi_zero_mass(st_.rho[j], hp_.m);
        for (int g = 0; g < p_; ++g) {
            if (st_.Z(g, j) == 1)
                st_.Pi(g, j) = rng.beta(am + 1.0, a1m);
            else
                st_.Pi(g, j) = rng.uniform() < p0 ? 0.0 : rng.beta(am, a1m + 1.0);
        }
    }
    if (!fixedRho_.size()) {
        long nPlus = 0;
        for (int g = 0; g < p_; ++g)
            if (st_.Pi(g, j) > 0.0) ++nPlus;
        st_.rho[j] = rng.beta(hp_.s * hp_.r + static_cast<double>(nPlus),
                              hp_.s * (1.0 - hp_.r) + static_cast<double>(p_ - nPlus));
    }
    if (!fixedTau_.size()) {
        long n1 = 0;
        double ss = 0.0;
        for (int g = 0; g < p_; ++g) {
            if (st_.Z(g, j) == 1) {
                ++n1;
                ss += st_.B(g, j) * st_.B(g, j);
            }
        }
        st_.tau[j] = 1.0 / rng.gamma(hp_.tauShape + 0.5 * static_cast<double>(n1),
                                     hp_.tauRate + 0.5 * ss);
    }
}

void GibbsSampler::psi_update(int g, Rng& rng) {
    if (fixedPsi_.size()) return;
    const double rss = n_ > 0 ? R_.row(g).squaredNorm() : 0.0;
    st_.psi[g] =
        1.0 / rng.gamma(hp_.psiShape + 0.5 * static_cast<double>(n_), hp_.psiRate + 0.5 * rss);
}

void GibbsSampler::sweep() {
    const std::uint64_t salt = st_.rng.next_u64();
    const auto base = static_cast<std::uint64_t>(p_);
    parallel_for(ctl_.threads, p_, [&](long g) {
        Rng rng(derive_stream_seed(salt, static_cast<std::uint64_t>(g)));
        gene_update(static_cast<int>(g), rng);
    });
    parallel_for(ctl_.threads, K_ - 1, [&](long idx) {
        const int j = static_cast<int>(idx) + 1;
        Rng rng(derive_stream_seed(salt, base + static_cast<std::uint64_t>(j)));
        column_update(j, rng);
    });
    parallel_for(ctl_.threads, p_, [&](long g) {
        Rng rng(derive_stream_seed(salt, base + static_cast<std::uint64_t>(K_) +
                                             static_cast<std::uint64_t>(g)));
        psi_update(static_cast<int>(g), rng);
    });
    ++st_.iteration;
}

void GibbsSampler::accumulate() {
    for (int g = 0; g < p_; ++g) {
        for (int j = 0; j < K_; ++j) {
            if (st_.Z(g, j) == 1) {
                acc_.sumZ(g, j) += 1.0;
                acc_.sumBeta(g, j) += st_.B(g, j);
                acc_.sumBetaSq(g, j) += st_.B(g, j) * st_.B(g, j);
            }
        }
    }
    acc_.sumRho += st_.rho;
    acc_.sumTau += st_.tau;
    acc_.sumPsi += st_.psi;
    ++acc_.saved;
}

PosteriorSummary GibbsSampler::run_chain() {
    for (long t = 0; t < ctl_.burnIn; ++t) sweep();
    for (long t = 1; t <= ctl_.samples; ++t) {
        sweep();
        if (t % ctl_.thin == 0) accumulate();
    }
    return summary();
}

PosteriorSummary summarize_accumulator(const ChainAccumulator& acc, std::uint64_t seed) {
    if (acc.saved == 0) throw ValidationError("no samples accumulated");
    const int p = static_cast<int>(acc.sumZ.rows());
    const int K = static_cast<int>(acc.sumZ.cols());
    PosteriorSummary s;
    const double N = static_cast<double>(acc.saved);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.piStar = acc.sumZ / N;
    s.zCount = acc.sumZ;
    s.betaMean.resize(p, K);
    s.betaSD.resize(p, K);
    for (int g = 0; g < p; ++g) {
        for (int j = 0; j < K; ++j) {
            const double k = acc.sumZ(g, j);
            if (k > 0.0) {
                const double mu = acc.sumBeta(g, j) / k;
                s.betaMean(g, j) = mu;
                s.betaSD(g, j) = std::sqrt(std::max(0.0, acc.sumBetaSq(g, j) / k - mu * mu));
            } else {
                s.betaMean(g, j) = nan;
                s.betaSD(g, j) = nan;
            }
        }
    }
    s.rhoMean = acc.sumRho / N;
    s.tauMean = acc.sumTau / N;
    s.psiMean = acc.sumPsi / N;
    s.sampleCount = acc.saved;
    s.seed = seed;
    return s;
}

PosteriorSummary GibbsSampler::summary() const { return summarize_accumulator(acc_, ctl_.seed); }

void GibbsSampler::check_invariants() const {
    for (int g = 0; g < p_; ++g) {
        if (st_.Z(g, 0) != 1) throw ValidationError("intercept indicator must stay 1");
        if (!(st_.psi[g] > 0.0)) throw ValidationError("psi must be positive");
        for (int j = 0; j < K_; ++j) {
            const int z = st_.Z(g, j);
            if (z != 0 && z != 1) throw ValidationError("indicator not 0/1");
            if (j >= 1) {
                if (z == 0 && st_.B(g, j) != 0.0)
                    throw ValidationError("zero indicator with nonzero effect");
                if (z == 1 && st_.B(g, j) == 0.0)
                    throw ValidationError("unit indicator with zero effect");
                if (z == 1 && !(st_.Pi(g, j) > 0.0))
                    throw ValidationError("unit indicator with zero inclusion probability");
            }
            if (!(st_.Pi(g, j) >= 0.0 && st_.Pi(g, j) <= 1.0))
                throw ValidationError("pi outside [0,1]");
        }
    }
    for (int j = 1; j < K_; ++j) {
        if (!(st_.tau[j] > 0.0)) throw ValidationError("tau must be positive");
        if (!(st_.rho[j] > 0.0 && st_.rho[j] < 1.0)) throw ValidationError("rho outside (0,1)");
    }
}

namespace {

void put_matrix(std::ostringstream& out, const char* tag, const Matrix& M) {
    out << tag;
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        for (Eigen::Index j = 0; j < M.cols(); ++j) out << ' ' << format_hex(M(i, j));
    out << '\n';
}

void put_vector(std::ostringstream& out, const char* tag, const Vector& v) {
    out << tag;
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << format_hex(v[i]);
    out << '\n';
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

void get_matrix(const std::string& line, const char* tag, Matrix& M) {
    const auto f = split_ws(line);
    if (f.empty() || f[0] != tag || static_cast<Eigen::Index>(f.size()) != M.size() + 1)
        throw ParseError(std::string("checkpoint: bad ") + tag + " record");
    std::size_t k = 1;
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        for (Eigen::Index j = 0; j < M.cols(); ++j) M(i, j) = parse_hex_double(f[k++], tag);
}

void get_vector(const std::string& line, const char* tag, Vector& v) {
    const auto f = split_ws(line);
    if (f.empty() || f[0] != tag || static_cast<Eigen::Index>(f.size()) != v.size() + 1)
        throw ParseError(std::string("checkpoint: bad ") + tag + " record");
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = parse_hex_double(f[i + 1], tag);
}

}  // namespace

std::string GibbsSampler::checkpoint_text() const {
    std::ostringstream out;
    out << "spanova-checkpoint\t1\n";
    out << "dims " << p_ << ' ' << n_ << ' ' << K_ << ' ' << st_.iteration << ' ' << acc_.saved
        << '\n';
    const auto rs = st_.rng.state();
    out << "rng " << rs[0] << ' ' << rs[1] << ' ' << rs[2] << ' ' << rs[3] << '\n';
    put_matrix(out, "B", st_.B);
    out << "Z";
    for (int g = 0; g < p_; ++g)
        for (int j = 0; j < K_; ++j) out << ' ' << st_.Z(g, j);
    out << '\n';
    put_matrix(out, "Pi", st_.Pi);
    put_vector(out, "rho", st_.rho);
    put_vector(out, "tau", st_.tau);
    put_vector(out, "psi", st_.psi);
    Matrix R = R_;
    put_matrix(out, "R", R);
    put_matrix(out, "sumZ", acc_.sumZ);
    put_matrix(out, "sumBeta", acc_.sumBeta);
    put_matrix(out, "sumBetaSq", acc_.sumBetaSq);
    put_vector(out, "sumRho", acc_.sumRho);
    put_vector(out, "sumTau", acc_.sumTau);
    put_vector(out, "sumPsi", acc_.sumPsi);
    return out.str();
}

void GibbsSampler::restore_checkpoint(const std::string& text) {
    const auto lines = split_lines(text);
    if (lines.size() < 16 || lines[0] != "spanova-checkpoint\t1")
        throw ParseError("not a checkpoint file");
    {
        const auto f = split_ws(lines[1]);
        if (f.size() != 6 || f[0] != "dims") throw ParseError("checkpoint: bad dims record");
        if (std::stoi(f[1]) != p_ || std::stoi(f[2]) != n_ || std::stoi(f[3]) != K_)
            throw ValidationError("checkpoint dimensions do not match sampler");
        st_.iteration = std::stol(f[4]);
        acc_.saved = std::stol(f[5]);
    }
    {
        const auto f = split_ws(lines[2]);
        if (f.size() != 5 || f[0] != "rng") throw ParseError("checkpoint: bad rng record");
        std::array<std::uint64_t, 4> rs;
        for (int i = 0; i < 4; ++i) rs[static_cast<std::size_t>(i)] = std::stoull(f[i + 1]);
        st_.rng.set_state(rs);
    }
    get_matrix(lines[3], "B", st_.B);
    {
        const auto f = split_ws(lines[4]);
        if (f.empty() || f[0] != "Z" ||
            static_cast<Eigen::Index>(f.size()) != st_.Z.size() + 1)
            throw ParseError("checkpoint: bad Z record");
        std::size_t k = 1;
        for (int g = 0; g < p_; ++g)
            for (int j = 0; j < K_; ++j) st_.Z(g, j) = std::stoi(f[k++]);
    }
    get_matrix(lines[5], "Pi", st_.Pi);
    get_vector(lines[6], "rho", st_.rho);
    get_vector(lines[7], "tau", st_.tau);
    get_vector(lines[8], "psi", st_.psi);
    Matrix R(p_, n_);
    get_matrix(lines[9], "R", R);
    R_ = R;
    get_matrix(lines[10], "sumZ", acc_.sumZ);
    get_matrix(lines[11], "sumBeta", acc_.sumBeta);
    get_matrix(lines[12], "sumBetaSq", acc_.sumBetaSq);
    get_vector(lines[13], "sumRho", acc_.sumRho);
    get_vector(lines[14], "sumTau", acc_.sumTau);
    get_vector(lines[15], "sumPsi", acc_.sumPsi);
}

PosteriorSummary run_chain(const RowMatrix& X, const Matrix& H, const HyperParameters& h,
                           const McmcControl& c) {
    GibbsSampler sampler(X, H, h, c);
    return sampler.run_chain();
}

}  // namespace spanova
