#include "spanova/factor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "spanova/parallel.hpp"

namespace spanova {

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

FactorSampler::FactorSampler(const RowMatrix& X, const Matrix& controls, const HyperParameters& h,
                             const McmcControl& c, const FactorOptions& opt)
    : X_(X), hp_(h), ctl_(c), opt_(opt) {
    p_ = static_cast<int>(X_.rows());
    n_ = static_cast<int>(X_.cols());
    Kc_ = static_cast<int>(controls.cols());
    k_ = opt.factors;
    K_ = Kc_ + k_;
    if (controls.rows() != n_)
        throw ValidationError("control design rows do not match sample count");
    if (p_ < 1 || Kc_ < 1)
        throw ValidationError("need at least one gene and the intercept column");
    if (k_ < 1) throw ValidationError("factor count must be at least 1");
    if (k_ > std::min(p_, n_))
        throw ValidationError("factor count exceeds min(genes, samples)");
    if (!(opt.alphaShape > 0.0) || !(opt.alphaRate > 0.0))
        throw ValidationError("concentration prior parameters must be positive");
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

    W_.resize(n_, K_);
    W_.leftCols(Kc_) = controls;

    // spectral warm start: loadings U_k D_k / sqrt(n), scores sqrt(n) V_k'
    const Vector rowMeans = X_.rowwise().mean();
    Matrix Xc = X_;
    Xc.colwise() -= rowMeans;
    Eigen::BDCSVD<Matrix> svd(Xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double rootN = std::sqrt(static_cast<double>(n_));
    Matrix A0 = svd.matrixU().leftCols(k_) * svd.singularValues().head(k_).asDiagonal() / rootN;
    Matrix L0 = rootN * svd.matrixV().leftCols(k_).transpose();

    st_.B = Matrix::Zero(p_, K_);
    st_.Z = IntMatrix::Zero(p_, K_);
    st_.Z.col(0).setOnes();
    st_.Pi = Matrix::Zero(p_, K_);
    st_.Pi.col(0).setOnes();
    st_.rho = Vector::Constant(K_, h.r);
    st_.rho[0] = 1.0;
    st_.tau = Vector::Constant(K_, h.priorTauMean());
    st_.tau[0] = h.tau1;
    st_.B.col(0) = rowMeans;

    anchorFactorOf_.assign(static_cast<std::size_t>(p_), -1);
    if (opt.anchorConstraints) {
        anchors_.reserve(static_cast<std::size_t>(k_));
        for (int f = 0; f < k_; ++f) {
            int best = -1;
            double bestAbs = -1.0;
            for (int g = 0; g < p_; ++g) {
                if (anchorFactorOf_[static_cast<std::size_t>(g)] >= 0) continue;
                const double v = std::abs(A0(g, f));
                if (v > bestAbs) {
                    bestAbs = v;
                    best = g;
                }
            }
            anchors_.push_back(best);
            anchorFactorOf_[static_cast<std::size_t>(best)] = f;
            if (A0(best, f) < 0.0) {
                // flip the whole factor so its anchor loads positively
                A0.col(f) = -A0.col(f);
                L0.row(f) = -L0.row(f);
            }
            if (A0(best, f) == 0.0) A0(best, f) = 1e-3;
        }
    }

    for (int f = 0; f < k_; ++f) {
        const int j = Kc_ + f;
        for (int g = 0; g < p_; ++g) {
            const int af = anchorFactorOf_[static_cast<std::size_t>(g)];
            if (af >= 0 && f > af) continue;  // anchors stay out past their own factor
            st_.B(g, j) = A0(g, f);
            st_.Z(g, j) = A0(g, f) != 0.0 ? 1 : 0;
        }
        st_.Pi.col(j).setConstant(h.m);
        st_.rho[j] = 0.5;
    }
    W_.rightCols(k_) = L0.transpose();

    if (fixedTau_.size()) st_.tau.tail(K_ - 1) = fixedTau_;
    if (fixedRho_.size()) st_.rho.tail(K_ - 1) = fixedRho_;
    if (piFixed_) {
        for (int j = 1; j < K_; ++j) st_.Pi.col(j).setConstant(piValue_);
        if (piValue_ <= 0.0) {
            for (int g = 0; g < p_; ++g) {
                const int af = anchorFactorOf_[static_cast<std::size_t>(g)];
                for (int j = 1; j < K_; ++j) {
                    if (af >= 0 && j == Kc_ + af) continue;
                    st_.Z(g, j) = 0;
                    st_.B(g, j) = 0.0;
                }
            }
        }
    }

    colS_.resize(K_);
    for (int j = 0; j < K_; ++j) colS_[j] = W_.col(j).squaredNorm();

    R_ = X_;
    R_.noalias() -= st_.B * W_.transpose();
    st_.psi.resize(p_);
    for (int g = 0; g < p_; ++g)
        st_.psi[g] = std::max(R_.row(g).squaredNorm() / std::max(n_ - 1, 1), 1e-6);
    if (fixedPsi_.size()) st_.psi = fixedPsi_;

    T_ = opt.forceGaussian ? 1 : std::min(n_, 50);
    mix_.assign.assign(static_cast<std::size_t>(n_), 0);
    mix_.locations = Matrix::Zero(T_, k_);
    mix_.sticks = Vector::Constant(T_, 0.5);
    mix_.sticks[T_ - 1] = 1.0;
    mix_.logWeights.resize(T_);
    {
        double acc = 0.0;
        for (int t = 0; t < T_; ++t) {
            mix_.logWeights[t] = std::log(mix_.sticks[t]) + acc;
            if (t + 1 < T_) acc += std::log1p(-mix_.sticks[t]);
        }
    }
    mix_.alpha = opt.alphaShape / opt.alphaRate;

    st_.rng = Rng(c.seed);
    st_.iteration = 0;

    acc_.sumZ = Matrix::Zero(p_, K_);
    acc_.sumBeta = Matrix::Zero(p_, K_);
    acc_.sumBetaSq = Matrix::Zero(p_, K_);
    acc_.sumRho = Vector::Zero(K_);
    acc_.sumTau = Vector::Zero(K_);
    acc_.sumPsi = Vector::Zero(p_);
    acc_.saved = 0;
    sumLambda_ = Matrix::Zero(k_, n_);
}

void FactorSampler::gene_update(int g, Rng& rng) {
    Eigen::Map<Vector> r(R_.row(g).data(), n_);
    const double psi = st_.psi[g];
    const int af = anchorFactorOf_[static_cast<std::size_t>(g)];

    {
        const auto h1 = W_.col(0);
        const double old = st_.B(g, 0);
        if (old != 0.0) r += old * h1;
        double mu = hp_.b, v = hp_.tau1;
        if (colS_[0] > 0.0) {
            v = 1.0 / (colS_[0] / psi + 1.0 / hp_.tau1);
            mu = v * (h1.dot(r) / psi + hp_.b / hp_.tau1);
        }
        const double fresh = rng.normal(mu, v);
        r -= fresh * h1;
        st_.B(g, 0) = fresh;
    }

    for (int j = 1; j < K_; ++j) {
        const auto hj = W_.col(j);
        const double S = colS_[j];
        const double tau = st_.tau[j];
        const double pi = st_.Pi(g, j);
        if (st_.Z(g, j) == 1) r += st_.B(g, j) * hj;

        if (af >= 0 && j >= Kc_) {
            const int f = j - Kc_;
            if (f > af) {
                st_.Z(g, j) = 0;
                st_.B(g, j) = 0.0;
                continue;
            }
            if (f == af) {  // the anchor loading stays in and positive
                double mean = 0.0, var = tau;
                if (S > 0.0) {
                    const double c = hj.dot(r);
                    const double d = psi + tau * S;
                    mean = tau * c / d;
                    var = psi * tau / d;
                }
                double beta = rng.truncated_normal_pos(mean, var);
                if (!(beta > 0.0)) beta = std::numeric_limits<double>::min();
                r -= beta * hj;
                st_.Z(g, j) = 1;
                st_.B(g, j) = beta;
                continue;
            }
        }

        int z;
        double mean = 0.0, var = tau;
        if (S <= 0.0) {
            z = 0;  // degenerate regressor carries no information; forced out
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
            r -= beta * hj;
        }
        st_.Z(g, j) = z;
        st_.B(g, j) = beta;
    }
}

void FactorSampler::column_update(int j, Rng& rng) {
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

void FactorSampler::psi_update(int g, Rng& rng) {
    if (fixedPsi_.size()) return;
    const double rss = R_.row(g).squaredNorm();
    st_.psi[g] =
        1.0 / rng.gamma(hp_.psiShape + 0.5 * static_cast<double>(n_), hp_.psiRate + 0.5 * rss);
}

void FactorSampler::mixture_update(Rng& rng) {
    if (opt_.forceGaussian) return;  // one component pinned at the origin
    const Matrix lambda = W_.rightCols(k_).transpose();
    std::vector<long> counts(static_cast<std::size_t>(T_), 0);
    Vector lp(T_);
    for (int i = 0; i < n_; ++i) {
        for (int t = 0; t < T_; ++t)
            lp[t] = mix_.logWeights[t] -
                    0.5 * (lambda.col(i) - mix_.locations.row(t).transpose()).squaredNorm();
        const double mx = lp.maxCoeff();
        double total = 0.0;
        for (int t = 0; t < T_; ++t) {
            lp[t] = std::exp(lp[t] - mx);
            total += lp[t];
        }
        const double u = rng.uniform() * total;
        double csum = 0.0;
        int pick = T_ - 1;
        for (int t = 0; t < T_; ++t) {
            csum += lp[t];
            if (u < csum) {
                pick = t;
                break;
            }
        }
        mix_.assign[static_cast<std::size_t>(i)] = pick;
        ++counts[static_cast<std::size_t>(pick)];
    }

    for (int t = 0; t < T_; ++t) {
        Vector s = Vector::Zero(k_);
        for (int i = 0; i < n_; ++i)
            if (mix_.assign[static_cast<std::size_t>(i)] == t) s += lambda.col(i);
        const double prec = static_cast<double>(counts[static_cast<std::size_t>(t)]) + 1.0;
        for (int f = 0; f < k_; ++f) mix_.locations(t, f) = rng.normal(s[f] / prec, 1.0 / prec);
    }

    long tail = n_;
    double logRemain = 0.0;
    for (int t = 0; t + 1 < T_; ++t) {
        tail -= counts[static_cast<std::size_t>(t)];
        const double v = rng.beta(1.0 + static_cast<double>(counts[static_cast<std::size_t>(t)]),
                                  mix_.alpha + static_cast<double>(tail));
        mix_.sticks[t] = v;
        logRemain += std::log1p(-v);
    }
    mix_.sticks[T_ - 1] = 1.0;
    {
        double acc = 0.0;
        for (int t = 0; t < T_; ++t) {
            mix_.logWeights[t] = std::log(mix_.sticks[t]) + acc;
            if (t + 1 < T_) acc += std::log1p(-mix_.sticks[t]);
        }
    }
    if (T_ > 1)
        mix_.alpha = rng.gamma(opt_.alphaShape + static_cast<double>(T_ - 1),
                               opt_.alphaRate - logRemain);
}

void FactorSampler::score_update(std::uint64_t salt) {
    const std::uint64_t mixIdx = static_cast<std::uint64_t>(p_) + static_cast<std::uint64_t>(K_) +
                                 static_cast<std::uint64_t>(p_);
    {
        Rng rng(derive_stream_seed(salt, mixIdx));
        mixture_update(rng);
    }

    const Matrix A = st_.B.rightCols(k_);
    Matrix E = R_;
    E.noalias() += A * W_.rightCols(k_).transpose();  // residual without the factor fits
    Matrix Apsi = A;
    for (int g = 0; g < p_; ++g) Apsi.row(g) /= st_.psi[g];
    Matrix P = Matrix::Identity(k_, k_);
    P.noalias() += A.transpose() * Apsi;
    Eigen::LLT<Matrix> llt(P);
    if (llt.info() != Eigen::Success)
        throw ValidationError("score precision matrix not positive definite");
    const Matrix proj = Apsi.transpose() * E;

    Matrix fresh(k_, n_);
    parallel_for(ctl_.threads, n_, [&](long i) {
        Rng rng(derive_stream_seed(salt, mixIdx + 1 + static_cast<std::uint64_t>(i)));
        Vector rhs =
            mix_.locations.row(mix_.assign[static_cast<std::size_t>(i)]).transpose();
        rhs += proj.col(static_cast<Eigen::Index>(i));
        const Vector mean = llt.solve(rhs);
        Vector zdraw(k_);
        for (int f = 0; f < k_; ++f) zdraw[f] = rng.normal();
        fresh.col(static_cast<Eigen::Index>(i)) = mean + llt.matrixU().solve(zdraw);
    });

    W_.rightCols(k_) = fresh.transpose();
    for (int f = 0; f < k_; ++f) colS_[Kc_ + f] = fresh.row(f).squaredNorm();
    R_ = X_;
    R_.noalias() -= st_.B * W_.transpose();  // full refresh keeps the residual exact
}

void FactorSampler::sweep() {
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
    score_update(salt);
    ++st_.iteration;
}

void FactorSampler::accumulate() {
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
    sumLambda_ += W_.rightCols(k_).transpose();
    ++acc_.saved;
}

FactorFit FactorSampler::fit() const {
    FactorFit out;
    out.summary = summarize_accumulator(acc_, ctl_.seed);
    out.lambdaMean = sumLambda_ / static_cast<double>(acc_.saved);
    out.anchors = anchors_;
    out.controlColumns = Kc_;
    out.factors = k_;
    return out;
}

FactorFit FactorSampler::run_chain() {
    for (long t = 0; t < ctl_.burnIn; ++t) sweep();
    for (long t = 1; t <= ctl_.samples; ++t) {
        sweep();
        if (t % ctl_.thin == 0) accumulate();
    }
    return fit();
}

void FactorSampler::check_invariants() const {
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
                if (z == 1 && !piFixed_ && !(st_.Pi(g, j) > 0.0))
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
    for (std::size_t f = 0; f < anchors_.size(); ++f) {
        const int g = anchors_[f];
        const int j = Kc_ + static_cast<int>(f);
        if (st_.Z(g, j) != 1 || !(st_.B(g, j) > 0.0))
            throw ValidationError("anchor loading must stay in and positive");
        for (int j2 = j + 1; j2 < K_; ++j2)
            if (st_.Z(g, j2) != 0)
                throw ValidationError("anchor loading present beyond its own factor");
    }
    for (int i = 0; i < n_; ++i) {
        const int ci = mix_.assign[static_cast<std::size_t>(i)];
        if (ci < 0 || ci >= T_) throw ValidationError("component id out of range");
        if (opt_.forceGaussian && ci != 0)
            throw ValidationError("forced Gaussian scores must share one component");
    }
    if (opt_.forceGaussian && mix_.locations.cwiseAbs().maxCoeff() != 0.0)
        throw ValidationError("forced Gaussian location must stay at the origin");
    if (!(mix_.alpha > 0.0)) throw ValidationError("concentration must be positive");
    for (int t = 0; t < T_; ++t)
        if (!(mix_.sticks[t] > 0.0 && mix_.sticks[t] <= 1.0))
            throw ValidationError("stick fraction outside (0,1]");
    if (mix_.sticks[T_ - 1] != 1.0) throw ValidationError("last stick must stay 1");
}

FactorFit fit_factors(const RowMatrix& X, const Matrix& controls, const HyperParameters& h,
                      const McmcControl& c, const FactorOptions& opt) {
    FactorSampler sampler(X, controls, h, c, opt);
    return sampler.run_chain();
}

Vector predictive_inclusion(const FactorFit& fit, const Vector& y, const HyperParameters& h) {
    const int k = fit.factors;
    const int n = static_cast<int>(fit.lambdaMean.cols());
    if (static_cast<int>(y.size()) != n)
        throw ValidationError("gene length does not match fitted scores");
    if (k < 1 || k > 20)
        throw ValidationError("factor subset enumeration supports 1..20 factors");

    Vector q(k);
    for (int f = 0; f < k; ++f) {
        const double rho = fit.summary.rhoMean[fit.controlColumns + f];
        q[f] = std::min(std::max(rho * h.m, 1e-12), 1.0 - 1e-12);
    }
    if (n < 1 || y.maxCoeff() - y.minCoeff() < 1e-12) return q;  // flat gene, prior carried through

    Matrix W(n, k + 1);
    W.col(0).setOnes();
    for (int f = 0; f < k; ++f) W.col(1 + f) = fit.lambdaMean.row(f).transpose();

    // plug-in noise level from least squares on the full regressor set
    double psiHat = h.priorPsiMean();
    if (n > k + 2) {
        Eigen::ColPivHouseholderQR<Matrix> qr(W);
        const Vector coef = qr.solve(y);
        const double dof = static_cast<double>(n) - static_cast<double>(qr.rank());
        if (dof >= 1.0) psiHat = std::max((y - W * coef).squaredNorm() / dof, 1e-6);
    }

    Vector tauHat(k + 1);
    tauHat[0] = h.tau1;
    for (int f = 0; f < k; ++f)
        tauHat[1 + f] = std::max(fit.summary.tauMean[fit.controlColumns + f], 1e-12);

    const Vector yt = y.array() - h.b;
    const Matrix G = W.transpose() * W;
    const Vector wy = W.transpose() * yt;
    const double yy = yt.squaredNorm();

    const unsigned configs = 1u << k;
    std::vector<double> logw(configs);
    std::vector<int> cols;
    cols.reserve(static_cast<std::size_t>(k) + 1);
    for (unsigned mask = 0; mask < configs; ++mask) {
        cols.clear();
        cols.push_back(0);
        for (int f = 0; f < k; ++f)
            if (mask & (1u << f)) cols.push_back(1 + f);
        const int m = static_cast<int>(cols.size());
        Matrix M(m, m);
        Vector rhs(m);
        double logDetT = 0.0;
        for (int a = 0; a < m; ++a) {
            rhs[a] = wy[cols[static_cast<std::size_t>(a)]];
            logDetT += std::log(tauHat[cols[static_cast<std::size_t>(a)]]);
            for (int b = 0; b < m; ++b)
                M(a, b) = G(cols[static_cast<std::size_t>(a)], cols[static_cast<std::size_t>(b)]) /
                          psiHat;
            M(a, a) += 1.0 / tauHat[cols[static_cast<std::size_t>(a)]];
        }
        Eigen::LLT<Matrix> llt(M);
        if (llt.info() != Eigen::Success)
            throw ValidationError("marginal likelihood matrix not positive definite");
        double logDetM = 0.0;
        for (int a = 0; a < m; ++a) logDetM += 2.0 * std::log(llt.matrixLLT()(a, a));
        const double quad = yy / psiHat - rhs.dot(llt.solve(rhs)) / (psiHat * psiHat);
        const double logDetSigma =
            static_cast<double>(n) * std::log(psiHat) + logDetM + logDetT;
        double lw = -0.5 * (static_cast<double>(n) * std::log(2.0 * M_PI) + logDetSigma + quad);
        for (int f = 0; f < k; ++f)
            lw += (mask & (1u << f)) ? std::log(q[f]) : std::log1p(-q[f]);
        logw[mask] = lw;
    }

    const double mx = *std::max_element(logw.begin(), logw.end());
    double total = 0.0;
    for (auto& v : logw) {
        v = std::exp(v - mx);
        total += v;
    }
    Vector out = Vector::Zero(k);
    for (unsigned mask = 0; mask < configs; ++mask)
        for (int f = 0; f < k; ++f)
            if (mask & (1u << f)) out[f] += logw[mask];
    return out / total;
}

namespace {

std::vector<int> resolve_seed_rows(const ExpressionMatrix& pool,
                                   const std::vector<std::string>& seeds) {
    std::unordered_map<std::string, int> index;
    for (int g = 0; g < pool.p(); ++g) index.emplace(pool.geneIds[static_cast<std::size_t>(g)], g);
    std::vector<int> rows;
    std::unordered_set<std::string> seen;
    std::vector<std::string> missing;
    for (const auto& id : seeds) {
        if (!seen.insert(id).second) throw ValidationError("duplicate seed gene: " + id);
        const auto it = index.find(id);
        if (it == index.end())
            missing.push_back(id);
        else
            rows.push_back(it->second);
    }
    if (!missing.empty()) {
        std::string msg = "seed genes not in the expression pool:";
        for (const auto& id : missing) msg += " " + id;
        throw ValidationError(msg);
    }
    return rows;
}

RowMatrix take_rows(const RowMatrix& X, const std::vector<int>& rows) {
    RowMatrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
    return out;
}

}  // namespace

EvolveResult evolve(const ExpressionMatrix& pool, const std::vector<std::string>& seeds,
                    const Matrix& controls, const HyperParameters& h, const EvolutionControl& ec,
                    std::uint64_t seed, int threads) {
    if (seeds.empty()) throw ValidationError("need at least one seed gene");
    if (controls.rows() != pool.n())
        throw ValidationError("control design rows do not match sample count");
    {
        const auto violations = validate_evolution(ec);
        if (!violations.empty()) {
            std::string msg = "invalid evolution settings:";
            for (const auto& v : violations) msg += " " + v + ";";
            throw ValidationError(msg);
        }
    }

    EvolveResult out;
    out.rows = resolve_seed_rows(pool, seeds);
    out.genes = seeds;
    std::vector<char> inModel(static_cast<std::size_t>(pool.p()), 0);
    for (const int g : out.rows) inModel[static_cast<std::size_t>(g)] = 1;

    FactorOptions opt;
    opt.forceGaussian = ec.forceGaussian;
    opt.alphaShape = ec.alphaShape;
    opt.alphaRate = ec.alphaRate;
    int k = ec.initialFactors;

    McmcControl base;
    base.burnIn = ec.stageBurnIn;
    base.samples = ec.stageSamples;
    base.thin = 1;
    base.threads = threads;

    FactorFit fit;
    const int stageCap = ec.maxGenes + ec.maxFactors + 2;
    for (int stage = 1; stage <= stageCap; ++stage) {
        const RowMatrix Xsub = take_rows(pool.values, out.rows);
        McmcControl ctl = base;
        ctl.seed = derive_stream_seed(seed, static_cast<std::uint64_t>(2 * stage));
        opt.factors = k;
        fit = fit_factors(Xsub, controls, h, ctl, opt);

        StageRecord rec;
        rec.stage = stage;
        bool changed = false;

        const int inCount = static_cast<int>(out.rows.size());
        if (k < ec.maxFactors && inCount >= ec.factorGeneCount &&
            k + 1 <= std::min(inCount, pool.n())) {
            rec.triedFactor = true;
            McmcControl tctl = base;
            tctl.seed = derive_stream_seed(seed, static_cast<std::uint64_t>(2 * stage + 1));
            FactorOptions topt = opt;
            topt.factors = k + 1;
            FactorFit trial = fit_factors(Xsub, controls, h, tctl, topt);
            const int newCol = trial.controlColumns + k;
            int support = 0;
            for (int g = 0; g < inCount; ++g)
                if (trial.summary.piStar(g, newCol) > ec.factorGeneThreshold) ++support;
            if (support >= ec.factorGeneCount) {
                k += 1;
                fit = std::move(trial);
                rec.keptFactor = true;
                changed = true;
            }
        }

        if (inCount < ec.maxGenes) {
            std::vector<std::pair<double, int>> scored;
            for (int g = 0; g < pool.p(); ++g) {
                if (inModel[static_cast<std::size_t>(g)]) continue;
                const Vector probs =
                    predictive_inclusion(fit, pool.values.row(g).transpose(), h);
                const double sc = probs.maxCoeff();
                if (sc > ec.geneInclusionThreshold) scored.emplace_back(sc, g);
            }
            std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            const int room = std::min(ec.maxAdmitPerStage, ec.maxGenes - inCount);
            for (int i = 0; i < static_cast<int>(scored.size()) && i < room; ++i) {
                const int g = scored[static_cast<std::size_t>(i)].second;
                inModel[static_cast<std::size_t>(g)] = 1;
                out.rows.push_back(g);
                out.genes.push_back(pool.geneIds[static_cast<std::size_t>(g)]);
                rec.admitted.push_back(pool.geneIds[static_cast<std::size_t>(g)]);
                changed = true;
            }
        }

        rec.factors = k;
        rec.geneCount = static_cast<int>(out.rows.size());
        out.stages.push_back(rec);
        if (!changed) break;
    }
    out.fit = std::move(fit);
    return out;
}

std::string stage_log_to_text(const std::vector<StageRecord>& stages) {
    std::ostringstream out;
    out << "stage\tfactors\ttried_factor\tkept_factor\tgene_count\tadmitted\n";
    for (const auto& s : stages) {
        out << s.stage << '\t' << s.factors << '\t' << (s.triedFactor ? 1 : 0) << '\t'
            << (s.keptFactor ? 1 : 0) << '\t' << s.geneCount << '\t';
        if (s.admitted.empty()) {
            out << '-';
        } else {
            for (std::size_t i = 0; i < s.admitted.size(); ++i) {
                if (i) out << ',';
                out << s.admitted[i];
            }
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace spanova
