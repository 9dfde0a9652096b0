from src.worstcase import COLUMN_NAMES, DESIGNS, LABELS, curve_grid

# Пороги v из примеров выбора дизайна
THRESHOLDS = [0.15, 0.20, 0.25, 0.30, 0.35]

# Сетка r(v) в длинном формате: дизайн, v, r(v)
wide = curve_grid(DESIGNS, THRESHOLDS)
df = wide.melt(id_vars="v", var_name="column", value_name="r")
df["design"] = df["column"].map({COLUMN_NAMES[d]: LABELS[d] for d in DESIGNS})
df["complement"] = 1.0 - df["r"]

# Поворот таблицы, чтобы пороги были столбцами
r_table = df.pivot_table(index="design", columns="v", values="r")
complement_table = df.pivot_table(index="design", columns="v", values="complement")

print("=== Наибольшая вероятность МПД с долей DLT >= v ===")
print(r_table.round(4))
print("\n=== Наименьшая вероятность МПД с долей DLT < v ===")
print(complement_table.round(4))

with open("design_comparison.csv", "w", newline="") as f:
    f.write("# r(v)\n")
    r_table.to_csv(f, float_format="%.12g")
    f.write("# 1 - r(v)\n")
    complement_table.to_csv(f, float_format="%.12g")
