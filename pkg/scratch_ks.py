import time
import numpy as np
import biphik as bp
from biphik.models import ks

t_all = time.time()
cfg = ks.KsConfig()
seed = 0

t0 = time.time()
high, low = ks.ks_ensembles(cfg, seed=seed)
print(f"ensembles: {time.time()-t0:.1f}s  high cost={high.cost} low cost={low.cost}", flush=True)

ref = ks.ks_reference(cfg)
obs = ks.ks_observations(cfg, ref)
grid = high.grid
refnorm = np.linalg.norm(ref)

mean_err = np.linalg.norm(high.members.mean(axis=0) - ref) / refnorm
print(f"ensemble-mean rel err (paper >1.4): {mean_err:.3f}", flush=True)

def relerr(post):
    return np.linalg.norm(post.mean_at(grid.points) - ref) / refnorm

errs = {}
t0 = time.time()
krig = bp.posterior(bp.fit_ordinary_kriging(obs), obs)
errs["kriging"] = relerr(krig)
print(f"kriging: {errs['kriging']:.4f} ({time.time()-t0:.1f}s)", flush=True)

t0 = time.time()
errs["phik"] = relerr(bp.phik_posterior(high, obs))
print(f"phik: {errs['phik']:.4f} ({time.time()-t0:.1f}s)", flush=True)

t0 = time.time()
cofit = bp.fit_cophik(high, obs)
errs["cophik"] = relerr(cofit.posterior(obs))
print(f"cophik: {errs['cophik']:.4f} rho={cofit.model.rho:.3f} member={cofit.member_index} ({time.time()-t0:.1f}s)", flush=True)

t0 = time.time()
ip = bp.InnerProduct.ones(grid.size)
sel = bp.select_subset(low, ip, m_h=cfg.m_high)
gamma_alphas = low.params[sel.gamma_indices][:, 0]
high_gamma = ks.ks_high_subset(cfg, gamma_alphas, seed=seed)
ub = bp.build_bifidelity_ensemble(low, high_gamma, sel, ip)
print(f"selection+lift: {time.time()-t0:.1f}s gamma={sel.gamma_indices[:6]}...", flush=True)

errs["biphik"] = relerr(bp.phik_posterior(ub, obs))
print(f"biphik: {errs['biphik']:.4f}", flush=True)

t0 = time.time()
cbfit = bp.fit_cophik(ub, obs)
errs["cobiphik"] = relerr(cbfit.posterior(obs))
print(f"cobiphik: {errs['cobiphik']:.4f} rho={cbfit.model.rho:.3f} ({time.time()-t0:.1f}s)", flush=True)

rep = bp.compute_constants(high, ub, obs, ip)
print(f"delta1={rep.delta1:.2f} (paper 89.8)  delta2={rep.delta2:.2f} (paper 7.7)", flush=True)

print("\npaper: kriging 0.1581 phik 0.1145 cophik 0.0822 biphik 0.1439 cobiphik 0.2477")
print("mine: ", {k: round(v, 4) for k, v in errs.items()})
order = ["cophik", "phik", "biphik", "kriging", "cobiphik"]
vals = [errs[k] for k in order]
print("ordering CoPhIK<PhIK<BiPhIK<Kriging<CoBiPhIK:", all(vals[i] < vals[i+1] for i in range(4)))

cost = bp.cost_ratio_report(ub)
print("cost report:", cost)
print(f"total {time.time()-t_all:.1f}s")
