#pragma once

#include "mproj/ad/graph.hpp"
#include "mproj/ad/network.hpp"

namespace mproj::recon {

struct AdversarialLossNodes {
    int d_loss = -1;  // discriminator objective (to minimize)
    int g_loss = -1;  // non-saturating generator objective (to minimize)
};

/// GAN losses from [B,1] logit nodes:
///   d_loss = -(mean log sigma(D(real)) + mean log(1 - sigma(D(fake))))
///   g_loss = -mean log sigma(D(fake))
/// computed through softplus so log(0) cannot occur; logits are capped so a
/// saturated discriminator yields the guard floor/ceiling instead of inf.
inline AdversarialLossNodes adversarial_losses(ad::Graph& g, int real_logits, int fake_logits,
                                               double logit_cap = 30.0) {
    const int lr = g.clamp(real_logits, -logit_cap, logit_cap);
    const int lf = g.clamp(fake_logits, -logit_cap, logit_cap);
    // -log sigma(x) = softplus(-x); -log(1 - sigma(x)) = softplus(x)
    AdversarialLossNodes out;
    out.d_loss = g.add(g.mean(g.softplus(g.neg(lr))), g.mean(g.softplus(lf)));
    out.g_loss = g.mean(g.softplus(g.neg(lf)));
    return out;
}

/// Convenience: run the discriminator on [B,1,hw,hw] patch nodes and build
/// both losses.
inline AdversarialLossNodes adversarial_losses_on_patches(ad::Graph& g, const ad::ConvNetSpec& spec,
                                                          const ad::ConvNetNodes& disc,
                                                          int real_patches, int fake_patches,
                                                          double logit_cap = 30.0) {
    const int logits_real = ad::convnet_forward(g, spec, disc, real_patches);
    const int logits_fake = ad::convnet_forward(g, spec, disc, fake_patches);
    return adversarial_losses(g, logits_real, logits_fake, logit_cap);
}

}  // namespace mproj::recon
