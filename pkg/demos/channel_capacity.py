"""How many independent image channels fit per centimetre.

Prints the buffer needed between channels and the resulting density
for a few channel widths, at 35 cm^2/s and a 15 us storage time.
"""

from gemsim import buffer_width, channel_density
from gemsim.units import diffusion_cm2_s_to_mm2_us

D = diffusion_cm2_s_to_mm2_us(35.0)
T_US = 15.0
V_LIM = 0.9

if __name__ == "__main__":
    a = buffer_width(V_LIM, D, T_US)
    print(f"buffer for V >= {V_LIM}: {a:.4f} mm")
    print("  b_mm  channels/cm")
    for b in (0.02, 0.05, 0.1, 0.2, 0.5):
        print(f"{b:6.2f}  {channel_density(V_LIM, D, T_US, b) * 10:11.3f}")
