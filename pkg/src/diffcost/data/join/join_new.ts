# New version of `join`: loops interchanged, cost 2 per pair.
vars lenA lenB i j cost;
init l0;
terminal lout;
theta0 lenA - 1 >= 0, 100 - lenA >= 0, lenB - 1 >= 0, 100 - lenB >= 0, cost >= 0, -cost >= 0;
trans l0 -> l1 update i := 0;
trans l1 -> lout guard i >= lenB;
trans l1 -> l2 guard i < lenB update j := 0;
trans l2 -> l1 guard j >= lenA update i := i + 1;
trans l2 -> l3 guard j < lenA;
trans l3 -> l2 update j := j + 1, cost := cost + 2;
